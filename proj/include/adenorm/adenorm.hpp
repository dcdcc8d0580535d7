#pragma once

#include "adenorm/config.hpp"
#include "adenorm/encoder.hpp"
#include "adenorm/error.hpp"
#include "adenorm/evaluation.hpp"
#include "adenorm/losses.hpp"
#include "adenorm/ontology.hpp"
#include "adenorm/retrieval.hpp"
#include "adenorm/text.hpp"
#include "adenorm/training.hpp"
