#pragma once

// Umbrella header for the whole library.

#include "facekit/checkpoint.hpp"
#include "facekit/client.hpp"
#include "facekit/dataset.hpp"
#include "facekit/detect.hpp"
#include "facekit/embedding.hpp"
#include "facekit/errors.hpp"
#include "facekit/gemm.hpp"
#include "facekit/image.hpp"
#include "facekit/layers.hpp"
#include "facekit/loss.hpp"
#include "facekit/model.hpp"
#include "facekit/net.hpp"
#include "facekit/optim.hpp"
#include "facekit/rng.hpp"
#include "facekit/service.hpp"
#include "facekit/store.hpp"
#include "facekit/synthetic.hpp"
#include "facekit/tensor.hpp"
#include "facekit/train.hpp"
#include "facekit/wire.hpp"
