/* Copyright 2026 The PNE Contrast Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Everything except the command-line front end.

#ifndef PNE_PNE_HPP_
#define PNE_PNE_HPP_

#include "pne/config.hpp"
#include "pne/core.hpp"
#include "pne/error.hpp"
#include "pne/gradients.hpp"
#include "pne/losses.hpp"
#include "pne/metrics.hpp"
#include "pne/random.hpp"
#include "pne/reference.hpp"
#include "pne/sampling.hpp"
#include "pne/toytrain.hpp"
#include "pne/validation.hpp"

#endif  // PNE_PNE_HPP_
