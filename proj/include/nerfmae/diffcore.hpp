/*
 * Copyright 2026 The nerfmae Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header for the differentiable array substrate.

#ifndef NERFMAE_DIFFCORE_HPP_
#define NERFMAE_DIFFCORE_HPP_

#include "nerfmae/diffcore/autograd.hpp"
#include "nerfmae/diffcore/grad_check.hpp"
#include "nerfmae/diffcore/layers.hpp"
#include "nerfmae/diffcore/ndarray.hpp"
#include "nerfmae/diffcore/ops_conv.hpp"
#include "nerfmae/diffcore/ops_elementwise.hpp"
#include "nerfmae/diffcore/ops_linalg.hpp"
#include "nerfmae/diffcore/ops_loss.hpp"
#include "nerfmae/diffcore/optim.hpp"
#include "nerfmae/diffcore/parameters.hpp"

#endif  // NERFMAE_DIFFCORE_HPP_
