#pragma once

/**
 * @file blockprobe.hpp
 *
 * @brief Umbrella header for the whole library.
 */

#include "agreement.hpp"
#include "classifier.hpp"
#include "datagen.hpp"
#include "embedding.hpp"
#include "error.hpp"
#include "extractor.hpp"
#include "feature_store.hpp"
#include "hdbscan.hpp"
#include "manifest.hpp"
#include "parallel.hpp"
#include "reducer.hpp"
#include "report.hpp"
#include "retrieval.hpp"
#include "rng.hpp"
