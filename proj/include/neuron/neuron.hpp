// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "neuron/alignment.hpp"
#include "neuron/autodiff.hpp"
#include "neuron/config.hpp"
#include "neuron/encoder.hpp"
#include "neuron/errors.hpp"
#include "neuron/eval.hpp"
#include "neuron/gradcheck.hpp"
#include "neuron/io.hpp"
#include "neuron/model.hpp"
#include "neuron/nn.hpp"
#include "neuron/probe.hpp"
#include "neuron/protocol.hpp"
#include "neuron/semantics.hpp"
#include "neuron/skeleton.hpp"
#include "neuron/spatial.hpp"
#include "neuron/synthetic.hpp"
#include "neuron/temporal.hpp"
#include "neuron/tensor.hpp"
#include "neuron/train.hpp"
