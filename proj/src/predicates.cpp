#include "predicates.hpp"

#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace cloak::detail {

namespace {

using Exact = boost::multiprecision::number<
    boost::multiprecision::cpp_bin_float<320, boost::multiprecision::digit_base_2>,
    boost::multiprecision::et_off>;

constexpr double kEps = std::numeric_limits<double>::epsilon() / 2.0;
constexpr double kOrientBound = (3.0 + 16.0 * kEps) * kEps;
constexpr double kInCircleBound = (10.0 + 96.0 * kEps) * kEps;

double sign_of(const Exact &v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

double orient2d_exact(Vec2 a, Vec2 b, Vec2 c) {
  const Exact acx = Exact(a.x) - Exact(c.x);
  const Exact bcx = Exact(b.x) - Exact(c.x);
  const Exact acy = Exact(a.y) - Exact(c.y);
  const Exact bcy = Exact(b.y) - Exact(c.y);
  return sign_of(acx * bcy - acy * bcx);
}

double incircle_exact(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const Exact adx = Exact(a.x) - Exact(d.x), ady = Exact(a.y) - Exact(d.y);
  const Exact bdx = Exact(b.x) - Exact(d.x), bdy = Exact(b.y) - Exact(d.y);
  const Exact cdx = Exact(c.x) - Exact(d.x), cdy = Exact(c.y) - Exact(d.y);
  const Exact alift = adx * adx + ady * ady;
  const Exact blift = bdx * bdx + bdy * bdy;
  const Exact clift = cdx * cdx + cdy * cdy;
  const Exact det = alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) +
                    clift * (adx * bdy - ady * bdx);
  return sign_of(det);
}

}  // namespace

double orient2d(Vec2 a, Vec2 b, Vec2 c) {
  const double left = (a.x - c.x) * (b.y - c.y);
  const double right = (a.y - c.y) * (b.x - c.x);
  const double det = left - right;
  const double sum = std::abs(left) + std::abs(right);
  if (std::abs(det) > kOrientBound * sum) return det;
  return orient2d_exact(a, b, c);
}

double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
  const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift +
                           (std::abs(cdxady) + std::abs(adxcdy)) * blift +
                           (std::abs(adxbdy) + std::abs(bdxady)) * clift;
  if (std::abs(det) > kInCircleBound * permanent) return det;
  return incircle_exact(a, b, c, d);
}

}  // namespace cloak::detail
