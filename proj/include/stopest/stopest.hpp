#pragma once

#include "stopest/bit_sequence.hpp"
#include "stopest/entropy_return.hpp"
#include "stopest/error.hpp"
#include "stopest/guessing.hpp"
#include "stopest/process_models.hpp"
#include "stopest/recurrence.hpp"
#include "stopest/statistics.hpp"
