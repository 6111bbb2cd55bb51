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


// Umbrella header for ingestion, configuration, checkpoints and the CLI.

#ifndef NERFMAE_PIPELINE_HPP_
#define NERFMAE_PIPELINE_HPP_

#include "nerfmae/pipeline/checkpoint.hpp"
#include "nerfmae/pipeline/commands.hpp"
#include "nerfmae/pipeline/manifest.hpp"
#include "nerfmae/pipeline/png_io.hpp"
#include "nerfmae/pipeline/run_config.hpp"

#endif  // NERFMAE_PIPELINE_HPP_
