// Copyright 2026 The peftner Authors
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

#include <string>

namespace peftner::carbon {

struct CarbonReport {
  double power_kw = 0.0;
  double hours = 0.0;
  double energy_kwh = 0.0;
  double intensity_g_per_kwh = 0.0;
  double kg_co2 = 0.0;

  std::string to_key_values() const;
};

/// E = P * t; kg = E * intensity / 1000. Throws NegativeInput.
CarbonReport estimate_carbon(double power_kw, double hours, double intensity_g_per_kwh);

}  // namespace peftner::carbon
