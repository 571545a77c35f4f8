/* Copyright 2026 The oojit Authors.

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

#ifndef OOJIT_SRC_EMBEDDED_DATA_HPP_
#define OOJIT_SRC_EMBEDDED_DATA_HPP_

#include <string_view>

namespace oojit::detail {

// Contents of data/presets.json and data/models.json, captured at build time.
std::string_view presets_json();
std::string_view models_json();

}  // namespace oojit::detail

#endif  // OOJIT_SRC_EMBEDDED_DATA_HPP_
