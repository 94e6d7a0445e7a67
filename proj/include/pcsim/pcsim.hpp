#pragma once

#include <pcsim/cache_oracle.hpp>
#include <pcsim/cache_store.hpp>
#include <pcsim/error.hpp>
#include <pcsim/experiment.hpp>
#include <pcsim/policy.hpp>
#include <pcsim/replay.hpp>
#include <pcsim/seed.hpp>
#include <pcsim/stats.hpp>
#include <pcsim/strategy.hpp>
#include <pcsim/token.hpp>
#include <pcsim/usage.hpp>
#include <pcsim/workload.hpp>
