#ifndef DBR_DBR_HPP
#define DBR_DBR_HPP

#include "dbr/baselines.hpp"
#include "dbr/core.hpp"
#include "dbr/quadrature.hpp"
#include "dbr/reduction.hpp"
#include "dbr/snapshot_series.hpp"
#include "dbr/testbeds.hpp"
#include "dbr/weighted.hpp"

#endif  // DBR_DBR_HPP
