#pragma once

#include "mvms/core/array2d.hpp"
#include "mvms/core/binary_io.hpp"
#include "mvms/core/error.hpp"
#include "mvms/diff/ops.hpp"
#include "mvms/diff/tape.hpp"
#include "mvms/diff/tensor.hpp"
#include "mvms/tomo/fbp.hpp"
#include "mvms/tomo/geometry.hpp"
#include "mvms/tomo/projector.hpp"
#include "mvms/tomo/upsample.hpp"
#include "mvms/refine/refine.hpp"
#include "mvms/msgc/msgc.hpp"
#include "mvms/model/model.hpp"
#include "mvms/train/adam.hpp"
#include "mvms/train/checkpoint.hpp"
#include "mvms/train/loss.hpp"
#include "mvms/train/train.hpp"
#include "mvms/bench/experiment.hpp"
#include "mvms/bench/fista.hpp"
#include "mvms/bench/metrics.hpp"
#include "mvms/bench/phantom.hpp"
#include "mvms/bench/tgrd.hpp"
