/*
 * Copyright 2026 The nnreduce Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef NNREDUCE_LOG_HPP
#define NNREDUCE_LOG_HPP

#include <functional>
#include <string>

namespace nnr {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: one line on stderr). Returns the
/// previous sink. Not thread-safe; set it up before running work.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace nnr

#endif  // NNREDUCE_LOG_HPP
