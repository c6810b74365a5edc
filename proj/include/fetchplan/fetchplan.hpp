#pragma once

// Convenience header pulling in the whole library.

#include "fetchplan/bench.hpp"
#include "fetchplan/dialog.hpp"
#include "fetchplan/episode_log.hpp"
#include "fetchplan/http_backend.hpp"
#include "fetchplan/kb.hpp"
#include "fetchplan/llm.hpp"
#include "fetchplan/names.hpp"
#include "fetchplan/prompts.hpp"
#include "fetchplan/resolve.hpp"
#include "fetchplan/simworld.hpp"
#include "fetchplan/stats.hpp"
#include "fetchplan/verify.hpp"
