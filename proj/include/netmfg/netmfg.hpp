#pragma once

#include "netmfg/error.hpp"
#include "netmfg/network.hpp"
#include "netmfg/grid.hpp"
#include "netmfg/hamiltonian.hpp"
#include "netmfg/coupling.hpp"
#include "netmfg/operators.hpp"
#include "netmfg/solvers.hpp"
#include "netmfg/mfg.hpp"
#include "netmfg/simulate.hpp"
#include "netmfg/io.hpp"
#include "netmfg/validate.hpp"
