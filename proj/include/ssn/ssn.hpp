#pragma once

#include "ssn/baselines.hpp"
#include "ssn/data.hpp"
#include "ssn/embeddings.hpp"
#include "ssn/encoder.hpp"
#include "ssn/error.hpp"
#include "ssn/eval.hpp"
#include "ssn/gradcheck.hpp"
#include "ssn/numcore.hpp"
#include "ssn/similarity.hpp"
#include "ssn/synth.hpp"
#include "ssn/training.hpp"
