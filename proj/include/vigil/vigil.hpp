#pragma once

// Umbrella header.

#include "vigil/builtin_plugins.hpp"
#include "vigil/error.hpp"
#include "vigil/evalkit.hpp"
#include "vigil/findings.hpp"
#include "vigil/gateway.hpp"
#include "vigil/llm_detection.hpp"
#include "vigil/mitigation.hpp"
#include "vigil/plugin.hpp"
#include "vigil/prompt.hpp"
#include "vigil/regex_detector.hpp"
#include "vigil/service.hpp"
#include "vigil/severity.hpp"
#include "vigil/taxonomy.hpp"
#include "vigil/text.hpp"
#include "vigil/transcript.hpp"
