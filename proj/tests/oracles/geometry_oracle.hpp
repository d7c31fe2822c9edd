#pragma once

// Reference point-in-polygon fill (crossing-number test) and index helpers.

#include <vector>

namespace oracle {

struct Pt {
  double r, c;
};

// Even-odd rule tested at integer pixel coordinates.
inline std::vector<int> polygon_fill(const std::vector<Pt>& poly, int h, int w) {
  std::vector<int> m(static_cast<std::size_t>(h) * w, 0);
  const int n = static_cast<int>(poly.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool in = false;
      for (int i = 0, j = n - 1; i < n; j = i++) {
        const Pt& a = poly[i];
        const Pt& b = poly[j];
        if ((a.r > r) != (b.r > r) && c < (b.c - a.c) * (r - a.r) / (b.r - a.r) + a.c) in = !in;
      }
      m[r * w + c] = in;
    }
  return m;
}

}  // namespace oracle
