#pragma once

#include "rfmask/beamform.hpp"
#include "rfmask/common.hpp"
#include "rfmask/dataset.hpp"
#include "rfmask/detect.hpp"
#include "rfmask/fusion.hpp"
#include "rfmask/geometry.hpp"
#include "rfmask/io.hpp"
#include "rfmask/mask.hpp"
#include "rfmask/metrics.hpp"
#include "rfmask/pipeline.hpp"
#include "rfmask/radar_model.hpp"
