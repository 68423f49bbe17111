#pragma once

#include "ppdo/admm.hpp"
#include "ppdo/adversary.hpp"
#include "ppdo/codec.hpp"
#include "ppdo/errors.hpp"
#include "ppdo/experiment.hpp"
#include "ppdo/messages.hpp"
#include "ppdo/paillier.hpp"
#include "ppdo/presets.hpp"
#include "ppdo/problem.hpp"
#include "ppdo/protocol.hpp"
#include "ppdo/rng.hpp"
#include "ppdo/transport.hpp"
