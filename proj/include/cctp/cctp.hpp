#pragma once

#include "cctp/rng.hpp"
#include "cctp/workbench.hpp"
#include "cctp/textio.hpp"
#include "cctp/parallel.hpp"
#include "cctp/taskgen.hpp"
#include "cctp/concepts.hpp"
#include "cctp/symbols.hpp"
#include "cctp/mdp.hpp"
#include "cctp/token_transition.hpp"
#include "cctp/pipeline.hpp"
#include "cctp/eval.hpp"
