#pragma once

#include "cloakopt/geometry.hpp"

namespace cloak::detail {

// Sign-exact geometric predicates. A floating-point evaluation is accepted
// when it clears the forward error bound; otherwise the determinant is
// recomputed in extended precision wide enough to be exact.

/// Positive when a, b, c are in counter-clockwise order.
double orient2d(Vec2 a, Vec2 b, Vec2 c);

/// Positive when d lies strictly inside the circle through the
/// counter-clockwise triangle a, b, c.
double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

}  // namespace cloak::detail
