#pragma once

#include "mvlat/mat.hpp"
#include "mvlat/rng.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/losses.hpp"
#include "mvlat/synth.hpp"
#include "mvlat/model.hpp"
#include "mvlat/trainer.hpp"
#include "mvlat/eval.hpp"
#include "mvlat/io.hpp"
#include "mvlat/gradcheck.hpp"
#include "mvlat/commands.hpp"
