#pragma once

#include "expected.hpp"
#include "codec.hpp"
#include "crypto.hpp"
#include "rec_core.hpp"
#include "quorum.hpp"
#include "ledger.hpp"
#include "consensus.hpp"
#include "netsim.hpp"
#include "audit.hpp"
#include "scenario.hpp"
#include "attacks.hpp"
