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

#include "peftner/carbon.hpp"

#include <cmath>
#include <cstdio>

#include "peftner/error.hpp"

namespace peftner::carbon {

CarbonReport estimate_carbon(double power_kw, double hours, double intensity_g_per_kwh) {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::NegativeInput, std::string(name) + " must be a finite non-negative number");
    }
  };
  check(power_kw, "power_kw");
  check(hours, "hours");
  check(intensity_g_per_kwh, "intensity_g_per_kwh");
  CarbonReport r;
  r.power_kw = power_kw;
  r.hours = hours;
  r.intensity_g_per_kwh = intensity_g_per_kwh;
  r.energy_kwh = power_kw * hours;
  r.kg_co2 = r.energy_kwh * intensity_g_per_kwh / 1000.0;
  return r;
}

std::string CarbonReport::to_key_values() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "power_kw=%.6g\nhours=%.6g\nenergy_kwh=%.6g\nintensity_g_per_kwh=%.6g\nkg_co2=%.6g\n", power_kw,
                hours, energy_kwh, intensity_g_per_kwh, kg_co2);
  return buf;
}

}  // namespace peftner::carbon
