#pragma once

#include "mwalk/autodiff.hpp"
#include "mwalk/checkpoint.hpp"
#include "mwalk/config.hpp"
#include "mwalk/env.hpp"
#include "mwalk/evaluate.hpp"
#include "mwalk/errors.hpp"
#include "mwalk/grad_check.hpp"
#include "mwalk/inference.hpp"
#include "mwalk/knowledge_graph.hpp"
#include "mwalk/layers.hpp"
#include "mwalk/mcts.hpp"
#include "mwalk/parallel.hpp"
#include "mwalk/puzzle.hpp"
#include "mwalk/rng.hpp"
#include "mwalk/synthetic_kb.hpp"
#include "mwalk/tensor.hpp"
#include "mwalk/training.hpp"
#include "mwalk/walker_model.hpp"
