#pragma once

#include "qsn/common.hpp"
#include "qsn/experiment.hpp"
#include "qsn/features.hpp"
#include "qsn/io.hpp"
#include "qsn/l96.hpp"
#include "qsn/network.hpp"
#include "qsn/reduced.hpp"
#include "qsn/resampler.hpp"
#include "qsn/rng.hpp"
#include "qsn/statistics.hpp"
