#pragma once

#include "tparafac2/errors.hpp"
#include "tparafac2/tensor.hpp"
#include "tparafac2/config.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/thomas.hpp"
#include "tparafac2/projection.hpp"
#include "tparafac2/kernels.hpp"
#include "tparafac2/aoadmm.hpp"
#include "tparafac2/missing_em.hpp"
#include "tparafac2/missing_rw.hpp"
#include "tparafac2/als.hpp"
#include "tparafac2/hungarian.hpp"
#include "tparafac2/eval.hpp"
#include "tparafac2/synthgen.hpp"
#include "tparafac2/io.hpp"
#include "tparafac2/experiment.hpp"
