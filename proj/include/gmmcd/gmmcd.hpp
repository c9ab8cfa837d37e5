#pragma once

/// Umbrella header: scene change detection for 3-D point clouds via Gaussian
/// mixture fitting and greedy earth mover's distance reduction.

#include "gmmcd/change_detection.hpp"
#include "gmmcd/common.hpp"
#include "gmmcd/eval.hpp"
#include "gmmcd/filters.hpp"
#include "gmmcd/gmm.hpp"
#include "gmmcd/kdtree.hpp"
#include "gmmcd/parallel.hpp"
#include "gmmcd/pca.hpp"
#include "gmmcd/ply_io.hpp"
#include "gmmcd/point_cloud.hpp"
#include "gmmcd/random.hpp"
#include "gmmcd/serialization.hpp"
#include "gmmcd/synth.hpp"
#include "gmmcd/transport.hpp"
