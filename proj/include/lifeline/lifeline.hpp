#pragma once

#include "lifeline/approximator.hpp"
#include "lifeline/continual.hpp"
#include "lifeline/core.hpp"
#include "lifeline/envs/chain.hpp"
#include "lifeline/envs/runner.hpp"
#include "lifeline/envs/task_sequence.hpp"
#include "lifeline/error.hpp"
#include "lifeline/harness/agent.hpp"
#include "lifeline/harness/config.hpp"
#include "lifeline/harness/csv.hpp"
#include "lifeline/harness/experiment.hpp"
#include "lifeline/harness/report.hpp"
#include "lifeline/metrics.hpp"
#include "lifeline/optimizer.hpp"
#include "lifeline/oracle.hpp"
#include "lifeline/ppo.hpp"
#include "lifeline/rng.hpp"
#include "lifeline/safety.hpp"
#include "lifeline/harness/gradient_suite.hpp"
