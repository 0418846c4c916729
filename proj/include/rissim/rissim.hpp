#pragma once

#include "rissim/channel.hpp"
#include "rissim/detection.hpp"
#include "rissim/geometry.hpp"
#include "rissim/harness.hpp"
#include "rissim/measurement.hpp"
#include "rissim/recovery.hpp"
#include "rissim/rng.hpp"
