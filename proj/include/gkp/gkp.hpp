#pragma once

#include "gkp/analysis.hpp"
#include "gkp/annotate.hpp"
#include "gkp/backends/factory.hpp"
#include "gkp/inference.hpp"
#include "gkp/knowledge.hpp"
#include "gkp/pipeline.hpp"
#include "gkp/store.hpp"
#include "gkp/tasks.hpp"
#include "gkp/theory.hpp"
