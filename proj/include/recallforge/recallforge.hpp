/*
 * Copyright 2026 The RecallForge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "recallforge/common.hpp"
#include "recallforge/config.hpp"
#include "recallforge/copurchase.hpp"
#include "recallforge/datamodel.hpp"
#include "recallforge/engine.hpp"
#include "recallforge/fusion.hpp"
#include "recallforge/metrics.hpp"
#include "recallforge/pipeline.hpp"
#include "recallforge/ranker.hpp"
#include "recallforge/recallset.hpp"
#include "recallforge/serde.hpp"
#include "recallforge/synthetic.hpp"
#include "recallforge/tfidf.hpp"
