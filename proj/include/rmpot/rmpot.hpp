#pragma once

#include "rmpot/bank.hpp"
#include "rmpot/core.hpp"
#include "rmpot/decimal.hpp"
#include "rmpot/digest.hpp"
#include "rmpot/errors.hpp"
#include "rmpot/evalharness.hpp"
#include "rmpot/fake_sandbox.hpp"
#include "rmpot/gateway.hpp"
#include "rmpot/mock_transport.hpp"
#include "rmpot/parallel.hpp"
#include "rmpot/pot_solver.hpp"
#include "rmpot/reformulator.hpp"
#include "rmpot/sandbox.hpp"
#include "rmpot/votebox.hpp"
