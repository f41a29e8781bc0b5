#pragma once

#include "stepnet/baseline.hpp"
#include "stepnet/counting.hpp"
#include "stepnet/error.hpp"
#include "stepnet/ingest.hpp"
#include "stepnet/model.hpp"
#include "stepnet/nn.hpp"
#include "stepnet/random.hpp"
#include "stepnet/report.hpp"
#include "stepnet/signal.hpp"
