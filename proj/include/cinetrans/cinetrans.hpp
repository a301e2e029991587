#pragma once

#include "cinetrans/analysis.hpp"
#include "cinetrans/attention.hpp"
#include "cinetrans/binary_io.hpp"
#include "cinetrans/config.hpp"
#include "cinetrans/curation.hpp"
#include "cinetrans/demo.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/frameio.hpp"
#include "cinetrans/json.hpp"
#include "cinetrans/metrics.hpp"
#include "cinetrans/partition.hpp"
#include "cinetrans/rng.hpp"
#include "cinetrans/shotdetect.hpp"
#include "cinetrans/shotmask.hpp"
