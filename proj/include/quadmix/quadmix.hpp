#pragma once

#include "quadmix/corpus.hpp"
#include "quadmix/errors.hpp"
#include "quadmix/fixture.hpp"
#include "quadmix/gbdt.hpp"
#include "quadmix/harness.hpp"
#include "quadmix/optimizer.hpp"
#include "quadmix/parallel.hpp"
#include "quadmix/param_space.hpp"
#include "quadmix/params.hpp"
#include "quadmix/quantile.hpp"
#include "quadmix/rng.hpp"
#include "quadmix/sampler.hpp"
#include "quadmix/util.hpp"
