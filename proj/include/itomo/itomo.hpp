#pragma once

#include "itomo/fbp.hpp"
#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"
#include "itomo/io.hpp"
#include "itomo/metrics.hpp"
#include "itomo/nn/layers.hpp"
#include "itomo/nn/tensor.hpp"
#include "itomo/nn/unet.hpp"
#include "itomo/nullspace.hpp"
#include "itomo/pcg32.hpp"
#include "itomo/phantom.hpp"
#include "itomo/projector.hpp"
#include "itomo/trainer.hpp"
#include "itomo/tv.hpp"
