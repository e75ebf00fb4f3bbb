#pragma once

#include "mzh/grid.hpp"
#include "mzh/rng.hpp"
#include "mzh/parallel.hpp"
#include "mzh/fd.hpp"
#include "mzh/fft.hpp"
#include "mzh/norms.hpp"
#include "mzh/mollify.hpp"
#include "mzh/potentials.hpp"
#include "mzh/helmholtz.hpp"
#include "mzh/bogovskii.hpp"
#include "mzh/extension.hpp"
#include "mzh/verify.hpp"
#include "mzh/io.hpp"
