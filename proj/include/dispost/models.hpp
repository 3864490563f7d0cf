#pragma once

#include "dispost/models/discrete.hpp"
#include "dispost/models/document.hpp"
#include "dispost/models/gaussian_mixture.hpp"
#include "dispost/models/logistic_regression.hpp"
