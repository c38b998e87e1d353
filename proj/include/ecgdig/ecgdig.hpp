#pragma once

#include "ecgdig/assignment.hpp"
#include "ecgdig/batch.hpp"
#include "ecgdig/components.hpp"
#include "ecgdig/error.hpp"
#include "ecgdig/eval.hpp"
#include "ecgdig/geometry.hpp"
#include "ecgdig/glyphs.hpp"
#include "ecgdig/grid_scale.hpp"
#include "ecgdig/layout.hpp"
#include "ecgdig/layout_spec.hpp"
#include "ecgdig/leads.hpp"
#include "ecgdig/perspective.hpp"
#include "ecgdig/pipeline.hpp"
#include "ecgdig/raster.hpp"
#include "ecgdig/segmentation.hpp"
#include "ecgdig/signal_io.hpp"
#include "ecgdig/synth.hpp"
#include "ecgdig/trace.hpp"
