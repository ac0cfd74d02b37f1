#pragma once

#include "patchbank/augmentation.hpp"
#include "patchbank/config.hpp"
#include "patchbank/datasets.hpp"
#include "patchbank/error.hpp"
#include "patchbank/feature_extraction.hpp"
#include "patchbank/image_io.hpp"
#include "patchbank/memory_bank.hpp"
#include "patchbank/metrics.hpp"
#include "patchbank/patch_features.hpp"
#include "patchbank/pipeline.hpp"
#include "patchbank/report.hpp"
#include "patchbank/rng.hpp"
#include "patchbank/stages.hpp"
#include "patchbank/synthetic.hpp"
