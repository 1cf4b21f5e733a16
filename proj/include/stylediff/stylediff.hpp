/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include "stylediff/backend.hpp"
#include "stylediff/errors.hpp"
#include "stylediff/experiments.hpp"
#include "stylediff/glyph.hpp"
#include "stylediff/image.hpp"
#include "stylediff/image_io.hpp"
#include "stylediff/loss.hpp"
#include "stylediff/matrix.hpp"
#include "stylediff/network.hpp"
#include "stylediff/optim.hpp"
#include "stylediff/transfer.hpp"
#include "stylediff/weights.hpp"
