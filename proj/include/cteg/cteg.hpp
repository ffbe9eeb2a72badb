#pragma once

#include "cteg/checkpoint.hpp"
#include "cteg/config.hpp"
#include "cteg/corpus.hpp"
#include "cteg/encoder.hpp"
#include "cteg/error.hpp"
#include "cteg/eval.hpp"
#include "cteg/featurize.hpp"
#include "cteg/gatenet.hpp"
#include "cteg/gradcheck.hpp"
#include "cteg/model.hpp"
#include "cteg/optim.hpp"
#include "cteg/params.hpp"
#include "cteg/preprocess.hpp"
#include "cteg/protohead.hpp"
#include "cteg/rng.hpp"
#include "cteg/synth.hpp"
#include "cteg/tensor.hpp"
#include "cteg/train.hpp"
#include "cteg/transformer.hpp"
