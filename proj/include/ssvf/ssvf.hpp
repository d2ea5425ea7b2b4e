#pragma once

#include "ssvf/error.hpp"
#include "ssvf/field.hpp"
#include "ssvf/encoding.hpp"
#include "ssvf/shamir.hpp"
#include "ssvf/optim.hpp"
#include "ssvf/wire.hpp"
#include "ssvf/digest.hpp"
#include "ssvf/transport.hpp"
#include "ssvf/tcp_transport.hpp"
#include "ssvf/protocol.hpp"
#include "ssvf/adversary.hpp"
#include "ssvf/scenario_io.hpp"
#include "ssvf/run_config.hpp"
#include "ssvf/verify.hpp"
