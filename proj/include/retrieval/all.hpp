#pragma once

#include "retrieval/core.hpp"
#include "retrieval/errors.hpp"
#include "retrieval/involution.hpp"
#include "retrieval/polytope.hpp"
#include "retrieval/quality.hpp"
#include "retrieval/quantum.hpp"
#include "retrieval/random.hpp"
#include "retrieval/retrieval_maps.hpp"
