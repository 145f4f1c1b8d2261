// Copyright 2026 The FasterPose Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "fasterpose/augment.hpp"
#include "fasterpose/autodiff.hpp"
#include "fasterpose/checkpoint.hpp"
#include "fasterpose/complexity.hpp"
#include "fasterpose/dataset.hpp"
#include "fasterpose/gradcheck.hpp"
#include "fasterpose/heads.hpp"
#include "fasterpose/heatmap.hpp"
#include "fasterpose/losses.hpp"
#include "fasterpose/metrics.hpp"
#include "fasterpose/ops.hpp"
#include "fasterpose/optim.hpp"
#include "fasterpose/tensor.hpp"
#include "fasterpose/train.hpp"
