#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "mtnet/metrics.hpp"
#include "mtnet/synth.hpp"

using namespace mtnet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TaxelLayout pair_layout() {
  LayoutConfig lc;
  SensorPatch a;
  a.name = "a";
  a.rows = 1;
  a.cols = 2;
  a.origin = Eigen::Vector3d(0, 0, 0);
  a.finger = 0;
  SensorPatch b = a;
  b.name = "b";
  b.origin = Eigen::Vector3d(10, 0, 0);
  b.finger = 1;
  lc.sensors = {a, b};
  lc.expected_total = 4;
  return build_taxel_layout(lc);
}

}  // namespace

TEST_CASE("range-normalized rmse") {
  MatF gt(2, 6), pred(2, 6);
  gt.setZero();
  gt(0, 0) = 4.0f;  // range 4
  pred = gt.array() + 1.0f;
  CHECK_THAT(nrmse(pred, gt), WithinRel(0.25, 1e-6));
  CHECK_THAT(nrmse(gt, gt), WithinAbs(0.0, 1e-12));

  SECTION("flat target falls back to the force ceiling") {
    MatF flat = MatF::Constant(2, 6, 2.2f);
    MatF off = flat.array() + 1.0f;
    CHECK_THAT(nrmse(off, flat), WithinRel(0.2, 1e-6));
  }
  SECTION("shape mismatch throws") {
    MatF small(1, 6);
    CHECK_THROWS_AS(nrmse(small, gt), SchemaError);
  }
}

TEST_CASE("contact-region cosine") {
  const TaxelLayout lay = pair_layout();  // taxels 0,1 on sensor 0; 2,3 on sensor 1
  MatF gt = MatF::Zero(2, 12), contact = MatF::Zero(2, 2);
  contact(0, 0) = 1.0f;  // frame 0 touches sensor 0 only
  gt(0, 0) = 1.0f;       // taxel 0 pushes along x
  MatF pred = gt;

  SECTION("identical fields score one, scale does not matter") {
    CHECK_THAT(s_cossim(pred, gt, contact, lay), WithinAbs(1.0, 1e-12));
    MatF scaled = 7.0f * gt;
    CHECK_THAT(s_cossim(scaled, gt, contact, lay), WithinAbs(1.0, 1e-9));
  }
  SECTION("orthogonal prediction scores zero") {
    MatF ortho = MatF::Zero(2, 12);
    ortho(0, 1) = 3.0f;  // same taxel, y instead of x
    CHECK_THAT(s_cossim(ortho, gt, contact, lay), WithinAbs(0.0, 1e-12));
  }
  SECTION("junk outside the contact region is ignored") {
    MatF noisy = gt;
    noisy(0, 6) = 99.0f;   // sensor 1 taxel, frame 0 (not in contact)
    noisy(1, 0) = -50.0f;  // frame 1 has no contact at all
    CHECK_THAT(s_cossim(noisy, gt, contact, lay), WithinAbs(1.0, 1e-12));
  }
  SECTION("null prediction against a live target scores zero") {
    CHECK_THAT(s_cossim(MatF::Zero(2, 12), gt, contact, lay), WithinAbs(0.0, 1e-12));
  }
  SECTION("no contact frames at all") {
    CHECK_THAT(s_cossim(pred, gt, MatF::Zero(2, 2), lay), WithinAbs(1.0, 1e-12));
  }
  SECTION("opposite direction scores minus one") {
    CHECK_THAT(s_cossim(-gt, gt, contact, lay), WithinAbs(-1.0, 1e-12));
  }
}

TEST_CASE("concordance kernel") {
  const std::vector<double> ramp = {1.0, 1.5, 2.0, 2.5, 3.0};  // population var 0.5
  SECTION("constant offset degrades as 1/(1+c^2)") {
    for (double c : {0.0, 1.0, 2.0}) {
      std::vector<double> shifted = ramp;
      for (double& v : shifted) v += c;
      CHECK_THAT(ccc(ramp, shifted), WithinRel(1.0 / (1.0 + c * c), 1e-12));
    }
  }
  SECTION("perfect anticorrelation") {
    std::vector<double> x = {-1.0, -0.5, 0.0, 0.5, 1.0}, y = x;
    for (double& v : y) v = -v;
    CHECK_THAT(ccc(x, y), WithinAbs(-1.0, 1e-12));
  }
  SECTION("degenerate traces") {
    const std::vector<double> flat(5, 2.0), flat2(5, 3.0);
    CHECK(ccc(flat, flat) == 1.0);
    CHECK(ccc(flat, flat2) == 0.0);
    CHECK(ccc(flat, ramp) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("mismatched lengths throw") {
    CHECK_THROWS_AS(ccc(ramp, std::vector<double>{1.0}), SchemaError);
  }
}

TEST_CASE("boxcar smoothing with clamped edges") {
  const std::vector<double> x = {1.0, 1.5, 2.0, 2.5, 3.0};
  const std::vector<double> got = smooth(x, 5);
  const std::vector<double> want = {1.5, 1.75, 2.0, 2.25, 2.5};
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) CHECK_THAT(got[i], WithinRel(want[i], 1e-12));
  SECTION("constants are fixed points") {
    const std::vector<double> c(7, 3.3);
    for (double v : smooth(c, 5)) CHECK_THAT(v, WithinRel(3.3, 1e-12));
  }
  SECTION("window one is identity") {
    const std::vector<double> got1 = smooth(x, 1);
    for (size_t i = 0; i < x.size(); ++i) CHECK(got1[i] == x[i]);
  }
}

TEST_CASE("smoothed sensor concordance") {
  const TaxelLayout lay = pair_layout();
  MatF gt = MatF::Zero(8, 12);
  for (int t = 0; t < 8; ++t) gt(t, 0) = 0.3f * t;  // ramp on sensor 0
  CHECK_THAT(s_ccc(gt, gt, lay), WithinAbs(1.0, 1e-12));
  MatF shifted = gt;
  for (int t = 0; t < 8; ++t) shifted(t, 0) += 1.0f;
  const double near = s_ccc(shifted, gt, lay);
  MatF far = gt;
  for (int t = 0; t < 8; ++t) far(t, 0) += 3.0f;
  const double farv = s_ccc(far, gt, lay);
  CHECK(near < 1.0);
  CHECK(farv < near);  // larger offset, worse concordance
  CHECK(near > 0.0);
  // untouched second sensor is identical in both and does not drag the score
  CHECK_THAT(s_ccc(gt, gt, lay, 1), WithinAbs(1.0, 1e-12));
}

TEST_CASE("thresholded activation overlap") {
  MatF gt = MatF::Zero(1, 12), pred = MatF::Zero(1, 12);
  // gt activates taxels 1 and 2; prediction taxels 0 and 1
  gt(0, 3) = 1.0f;
  gt(0, 6) = 1.0f;
  pred(0, 0) = 1.0f;
  pred(0, 3) = 1.0f;
  CHECK_THAT(t_iou(pred, gt), WithinRel(1.0 / 3.0, 1e-12));
  CHECK_THAT(t_iou(gt, gt), WithinAbs(1.0, 1e-12));
  CHECK_THAT(t_iou(MatF::Zero(1, 12), MatF::Zero(1, 12)), WithinAbs(1.0, 1e-12));

  SECTION("empty frames average in as agreement") {
    MatF gt2 = MatF::Zero(2, 12), pred2 = MatF::Zero(2, 12);
    gt2(0, 3) = 1.0f;
    pred2(0, 3) = 1.0f;
    CHECK_THAT(t_iou(pred2, gt2), WithinAbs(1.0, 1e-12));
    pred2(0, 0) = 1.0f;  // now 1/2 on frame 0, 1 on frame 1
    CHECK_THAT(t_iou(pred2, gt2), WithinRel(0.75, 1e-12));
  }
  SECTION("threshold is strict") {
    MatF a = MatF::Zero(1, 12), b = MatF::Zero(1, 12);
    a(0, 0) = 0.03f;  // 3-4-5: magnitude lands exactly on the threshold
    a(0, 1) = 0.04f;
    CHECK_THAT(t_iou(a, b), WithinAbs(1.0, 1e-12));
    a(0, 1) = 0.0401f;
    CHECK_THAT(t_iou(a, b), WithinAbs(0.0, 1e-12));
  }
}

TEST_CASE("onset-window f1") {
  auto track = [](int T, std::vector<int> onsets, int hold = 3) {
    MatF m = MatF::Zero(T, 1);
    for (int o : onsets)
      for (int t = o; t < std::min(T, o + hold); ++t) m(t, 0) = 1.0f;
    return m;
  };
  SECTION("frozen half score") {
    // pred onsets {10, 40}, gt {12, 60}: one match in the +-5 window
    CHECK_THAT(w_f1(track(80, {10, 40}), track(80, {12, 60})), WithinRel(0.5, 1e-12));
  }
  SECTION("perfect and empty") {
    CHECK_THAT(w_f1(track(30, {4, 20}), track(30, {4, 20})), WithinAbs(1.0, 1e-12));
    CHECK_THAT(w_f1(track(30, {}), track(30, {})), WithinAbs(1.0, 1e-12));
    CHECK_THAT(w_f1(track(30, {}), track(30, {5})), WithinAbs(0.0, 1e-12));
    CHECK_THAT(w_f1(track(30, {5}), track(30, {})), WithinAbs(0.0, 1e-12));
  }
  SECTION("window boundary") {
    CHECK_THAT(w_f1(track(30, {10}), track(30, {15})), WithinAbs(1.0, 1e-12));
    CHECK_THAT(w_f1(track(40, {10}), track(40, {16})), WithinAbs(0.0, 1e-12));
  }
  SECTION("an onset matches at most once") {
    CHECK_THAT(w_f1(track(30, {10, 14}), track(30, {12})), WithinRel(2.0 / 3.0, 1e-12));
  }
  SECTION("sensors pool into one count") {
    MatF p = MatF::Zero(30, 2), g = MatF::Zero(30, 2);
    p(5, 0) = 1.0f;   // matches gt sensor 0
    g(6, 0) = 1.0f;
    g(20, 1) = 1.0f;  // missed on sensor 1
    CHECK_THAT(w_f1(p, g), WithinRel(2.0 / 3.0, 1e-12));
  }
  SECTION("shape mismatch throws") {
    CHECK_THROWS_AS(w_f1(MatF::Zero(3, 1), MatF::Zero(3, 2)), SchemaError);
  }
}

TEST_CASE("a perfect prediction maxes every score") {
  GenConfig gc;
  gc.frames = 30;
  const Episode ep = generate_episode(gc, 321, "robot");
  const TaxelLayout lay = build_taxel_layout(ep.layout);
  const MetricReport r = evaluate_episode(ep.tactile, ep.contact, ep, lay);
  CHECK_THAT(r.nrmse, WithinAbs(0.0, 1e-9));
  CHECK_THAT(r.s_cossim, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r.s_ccc, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r.t_iou, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r.w_f1, WithinAbs(1.0, 1e-12));
}

TEST_CASE("report averaging") {
  MetricReport a, b;
  a.nrmse = 0.2;
  a.w_f1 = 1.0;
  b.nrmse = 0.4;
  b.w_f1 = 0.0;
  const MetricReport m = mean_report({a, b});
  CHECK_THAT(m.nrmse, WithinRel(0.3, 1e-12));
  CHECK_THAT(m.w_f1, WithinRel(0.5, 1e-12));
  json j = m;
  CHECK(j.at("nrmse").get<double>() == m.nrmse);
}
