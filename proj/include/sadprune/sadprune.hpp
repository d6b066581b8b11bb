#pragma once

#include "sadprune/core/error.hpp"
#include "sadprune/core/random.hpp"
#include "sadprune/core/tensor.hpp"
#include "sadprune/data/csv.hpp"
#include "sadprune/data/dataset.hpp"
#include "sadprune/data/images.hpp"
#include "sadprune/data/movies.hpp"
#include "sadprune/data/synthetic.hpp"
#include "sadprune/data/text.hpp"
#include "sadprune/distill/distiller.hpp"
#include "sadprune/experiment/config.hpp"
#include "sadprune/experiment/report.hpp"
#include "sadprune/experiment/runner.hpp"
#include "sadprune/io/checkpoint.hpp"
#include "sadprune/metrics/metrics.hpp"
#include "sadprune/metrics/telemetry.hpp"
#include "sadprune/model_zoo/zoo.hpp"
#include "sadprune/prune/mask_set.hpp"
#include "sadprune/prune/ranking.hpp"
#include "sadprune/prune/reinit.hpp"
#include "sadprune/train/optimizer.hpp"
#include "sadprune/train/records.hpp"
#include "sadprune/train/schedule.hpp"
#include "sadprune/train/trainer.hpp"
