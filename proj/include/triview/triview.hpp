#pragma once

// Umbrella header for the triview multi-view skullstripping toolkit.

#include "triview/bundle.hpp"
#include "triview/checkpoint.hpp"
#include "triview/config.hpp"
#include "triview/dataset.hpp"
#include "triview/errors.hpp"
#include "triview/evaluation.hpp"
#include "triview/inference.hpp"
#include "triview/layers.hpp"
#include "triview/loss.hpp"
#include "triview/metrics.hpp"
#include "triview/model.hpp"
#include "triview/nifti.hpp"
#include "triview/optimizer.hpp"
#include "triview/phantom.hpp"
#include "triview/preprocess.hpp"
#include "triview/qc.hpp"
#include "triview/rng.hpp"
#include "triview/staple.hpp"
#include "triview/tensor.hpp"
#include "triview/training.hpp"
#include "triview/volume.hpp"
