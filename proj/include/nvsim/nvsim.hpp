#pragma once

#include "nvsim/config.hpp"
#include "nvsim/constants.hpp"
#include "nvsim/core.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/fft.hpp"
#include "nvsim/field.hpp"
#include "nvsim/imaging.hpp"
#include "nvsim/levmar.hpp"
#include "nvsim/localize.hpp"
#include "nvsim/oracle.hpp"
#include "nvsim/random.hpp"
#include "nvsim/sequence.hpp"
