#pragma once

#include "berwald/analysis.hpp"
#include "berwald/connection.hpp"
#include "berwald/errors.hpp"
#include "berwald/expr.hpp"
#include "berwald/metric.hpp"
#include "berwald/quadrature.hpp"
#include "berwald/randers_oracle.hpp"
#include "berwald/solver.hpp"
#include "berwald/summation.hpp"
#include "berwald/torsion.hpp"
