#pragma once

#include "sfde/delay_measure.hpp"
#include "sfde/errors.hpp"
#include "sfde/history.hpp"
#include "sfde/income_model.hpp"
#include "sfde/market.hpp"
#include "sfde/philox.hpp"
#include "sfde/simulation.hpp"
#include "sfde/valuation.hpp"
