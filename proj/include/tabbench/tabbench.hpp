#pragma once

#include "tabbench/audit.hpp"
#include "tabbench/core/csv.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/core/datetime.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/matrix.hpp"
#include "tabbench/core/rng.hpp"
#include "tabbench/harness/compare.hpp"
#include "tabbench/harness/evaluate.hpp"
#include "tabbench/harness/report.hpp"
#include "tabbench/harness/results.hpp"
#include "tabbench/hpo/space.hpp"
#include "tabbench/hpo/study.hpp"
#include "tabbench/hpo/tpe.hpp"
#include "tabbench/learners/baseline.hpp"
#include "tabbench/learners/external.hpp"
#include "tabbench/learners/gbdt.hpp"
#include "tabbench/learners/learner.hpp"
#include "tabbench/learners/losses.hpp"
#include "tabbench/learners/mlp.hpp"
#include "tabbench/learners/types.hpp"
#include "tabbench/metrics.hpp"
#include "tabbench/preprocess/encoders.hpp"
#include "tabbench/preprocess/normal.hpp"
#include "tabbench/preprocess/pipeline.hpp"
#include "tabbench/preprocess/transforms.hpp"
#include "tabbench/select.hpp"
#include "tabbench/split.hpp"
#include "tabbench/stats.hpp"
#include "tabbench/task.hpp"
