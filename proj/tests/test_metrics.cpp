#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scsr/metrics.hpp"
#include "scsr/tensor.hpp"

using namespace scsr;

// frozen reference values (tests/oracles/gen_oracles.py)
static const double kSsimA[256] = {
    0.58450000000000002, 0.56710000000000005, 0.67020000000000002, 0.74429999999999996, 0.70950000000000002, 0.74039999999999995, 0.69910000000000005, 0.54330000000000001,
    0.59599999999999997, 0.48320000000000002, 0.33629999999999999, 0.2913, 0.28449999999999998, 0.23810000000000001, 0.26469999999999999, 0.26000000000000001,
    0.43890000000000001, 0.50790000000000002, 0.60570000000000002, 0.59350000000000003, 0.80720000000000003, 0.75680000000000003, 0.72050000000000003, 0.79959999999999998,
    0.62729999999999997, 0.47089999999999999, 0.43120000000000003, 0.25169999999999998, 0.3513, 0.2379, 0.2142, 0.33119999999999999,
    0.25140000000000001, 0.43959999999999999, 0.4002, 0.5605, 0.6109, 0.79849999999999999, 0.83760000000000001, 0.72289999999999999,
    0.73909999999999998, 0.61909999999999998, 0.57020000000000004, 0.41220000000000001, 0.2792, 0.2077, 0.27750000000000002, 0.3639,
    0.29189999999999999, 0.309, 0.51000000000000001, 0.51700000000000002, 0.60019999999999996, 0.68489999999999995, 0.71950000000000003, 0.7339,
    0.66710000000000003, 0.72109999999999996, 0.62190000000000001, 0.5998, 0.42970000000000003, 0.26790000000000003, 0.2918, 0.34289999999999998,
    0.2326, 0.23469999999999999, 0.27679999999999999, 0.36349999999999999, 0.49180000000000001, 0.53769999999999996, 0.74839999999999995, 0.7127,
    0.75490000000000002, 0.81030000000000002, 0.77010000000000001, 0.61450000000000005, 0.55500000000000005, 0.48330000000000001, 0.35220000000000001, 0.2069,
    0.29020000000000001, 0.29670000000000002, 0.30080000000000001, 0.29160000000000003, 0.4078, 0.47899999999999998, 0.58330000000000004, 0.73960000000000004,
    0.80410000000000004, 0.78310000000000002, 0.76529999999999998, 0.72770000000000001, 0.62309999999999999, 0.53300000000000003, 0.41120000000000001, 0.35759999999999997,
    0.4078, 0.30049999999999999, 0.2351, 0.25719999999999998, 0.2959, 0.43790000000000001, 0.52980000000000005, 0.52769999999999995,
    0.70030000000000003, 0.69979999999999998, 0.82099999999999995, 0.74509999999999998, 0.77869999999999995, 0.59930000000000005, 0.52070000000000005, 0.4582,
    0.4118, 0.32219999999999999, 0.19500000000000001, 0.26150000000000001, 0.28270000000000001, 0.31900000000000001, 0.38840000000000002, 0.59930000000000005,
    0.58189999999999997, 0.63490000000000002, 0.76080000000000003, 0.75629999999999997, 0.73299999999999998, 0.73080000000000001, 0.64510000000000001, 0.55149999999999999,
    0.48970000000000002, 0.37180000000000002, 0.2621, 0.2382, 0.2266, 0.29299999999999998, 0.2878, 0.33079999999999998,
    0.51800000000000002, 0.53610000000000002, 0.58079999999999998, 0.74829999999999997, 0.71430000000000005, 0.76100000000000001, 0.66410000000000002, 0.56310000000000004,
    0.46949999999999997, 0.41410000000000002, 0.34250000000000003, 0.25080000000000002, 0.2419, 0.17610000000000001, 0.28399999999999997, 0.25340000000000001,
    0.41439999999999999, 0.55020000000000002, 0.65910000000000002, 0.76529999999999998, 0.65249999999999997, 0.78779999999999994, 0.79600000000000004, 0.73850000000000005,
    0.57120000000000004, 0.55059999999999998, 0.53120000000000001, 0.27989999999999998, 0.31480000000000002, 0.31119999999999998, 0.21829999999999999, 0.31330000000000002,
    0.2908, 0.3851, 0.47620000000000001, 0.61570000000000003, 0.67620000000000002, 0.77869999999999995, 0.70289999999999997, 0.72850000000000004,
    0.73640000000000005, 0.64419999999999999, 0.46210000000000001, 0.4698, 0.32950000000000002, 0.30940000000000001, 0.2702, 0.31440000000000001,
    0.29089999999999999, 0.253, 0.35880000000000001, 0.55530000000000002, 0.59470000000000001, 0.73880000000000001, 0.74529999999999996, 0.71250000000000002,
    0.78859999999999997, 0.64690000000000003, 0.5121, 0.62980000000000003, 0.33939999999999998, 0.38390000000000002, 0.33610000000000001, 0.26219999999999999,
    0.16950000000000001, 0.3367, 0.27500000000000002, 0.36180000000000001, 0.50229999999999997, 0.64859999999999995, 0.69810000000000005, 0.77280000000000004,
    0.7278, 0.72529999999999994, 0.62929999999999997, 0.59730000000000005, 0.55459999999999998, 0.41830000000000001, 0.37440000000000001, 0.2596,
    0.22489999999999999, 0.25600000000000001, 0.27700000000000002, 0.378, 0.4395, 0.60909999999999997, 0.59970000000000001, 0.67290000000000005,
    0.68089999999999995, 0.75109999999999999, 0.76739999999999997, 0.64800000000000002, 0.60919999999999996, 0.55910000000000004, 0.42530000000000001, 0.32329999999999998,
    0.33600000000000002, 0.2591, 0.27410000000000001, 0.3463, 0.40699999999999997, 0.41489999999999999, 0.4975, 0.62639999999999996,
    0.67879999999999996, 0.63849999999999996, 0.81379999999999997, 0.73360000000000003, 0.72070000000000001, 0.55149999999999999, 0.58589999999999998, 0.40060000000000001,
    0.34260000000000002, 0.21640000000000001, 0.24560000000000001, 0.2432, 0.27929999999999999, 0.37309999999999999, 0.43690000000000001, 0.57430000000000003};
static const double kSsimB[256] = {
    0.54710000000000003, 0.4874, 0.66869999999999996, 0.79459999999999997, 0.80910000000000004, 0.80549999999999999, 0.55789999999999995, 0.57340000000000002,
    0.71289999999999998, 0.48820000000000002, 0.29499999999999998, 0.316, 0.2442, 0.2893, 0.26369999999999999, 0.3715,
    0.47889999999999999, 0.45000000000000001, 0.65410000000000001, 0.66839999999999999, 0.76170000000000004, 0.7228, 0.53610000000000002, 0.87180000000000002,
    0.58030000000000004, 0.30120000000000002, 0.28970000000000001, 0.23380000000000001, 0.41210000000000002, 0.23080000000000001, 0.252, 0.24310000000000001,
    0.14410000000000001, 0.51039999999999996, 0.43959999999999999, 0.55800000000000005, 0.71340000000000003, 0.72240000000000004, 0.80389999999999995, 0.80500000000000005,
    0.8861, 0.61980000000000002, 0.7046, 0.36399999999999999, 0.30559999999999998, 0.19370000000000001, 0.15040000000000001, 0.3846,
    0.36649999999999999, 0.29709999999999998, 0.50429999999999997, 0.62839999999999996, 0.50019999999999998, 0.56510000000000005, 0.66720000000000002, 0.63819999999999999,
    0.77480000000000004, 0.74590000000000001, 0.55279999999999996, 0.55059999999999998, 0.65859999999999996, 0.21909999999999999, 0.23089999999999999, 0.36720000000000003,
    0.28360000000000002, 0.25240000000000001, 0.20419999999999999, 0.2707, 0.53949999999999998, 0.53339999999999999, 0.61709999999999998, 0.80640000000000001,
    0.81699999999999995, 0.79100000000000004, 0.74929999999999997, 0.63300000000000001, 0.50009999999999999, 0.37540000000000001, 0.378, 0.091800000000000007,
    0.32150000000000001, 0.18140000000000001, 0.2928, 0.28079999999999999, 0.5504, 0.39379999999999998, 0.47010000000000002, 0.68789999999999996,
    0.71419999999999995, 0.7359, 0.79890000000000005, 0.78949999999999998, 0.75580000000000003, 0.47399999999999998, 0.62219999999999998, 0.51619999999999999,
    0.3916, 0.1172, 0.22839999999999999, 0.26300000000000001, 0.112, 0.44379999999999997, 0.51380000000000003, 0.46479999999999999,
    0.75039999999999996, 0.7802, 0.78210000000000002, 0.76349999999999996, 0.72629999999999995, 0.53639999999999999, 0.52700000000000002, 0.5,
    0.36670000000000003, 0.14510000000000001, 0.2419, 0.1338, 0.29249999999999998, 0.46129999999999999, 0.3871, 0.50409999999999999,
    0.46500000000000002, 0.72850000000000004, 0.75949999999999995, 0.79949999999999999, 0.80710000000000004, 0.72689999999999999, 0.62050000000000005, 0.47570000000000001,
    0.24310000000000001, 0.25030000000000002, 0.25650000000000001, 0.22409999999999999, 0.25890000000000002, 0.2828, 0.30059999999999998, 0.39379999999999998,
    0.44719999999999999, 0.51319999999999999, 0.45219999999999999, 0.82609999999999995, 0.71740000000000004, 0.80020000000000002, 0.78749999999999998, 0.64949999999999997,
    0.4647, 0.47710000000000002, 0.22800000000000001, 0.28549999999999998, 0.253, 0.046600000000000003, 0.39100000000000001, 0.1971,
    0.46899999999999997, 0.51659999999999995, 0.73860000000000003, 0.87029999999999996, 0.58609999999999995, 0.66539999999999999, 0.78539999999999999, 0.80640000000000001,
    0.54149999999999998, 0.50149999999999995, 0.57030000000000003, 0.058999999999999997, 0.26169999999999999, 0.20050000000000001, 0.2419, 0.25440000000000002,
    0.2016, 0.35680000000000001, 0.35870000000000002, 0.61460000000000004, 0.62160000000000004, 0.74850000000000005, 0.64559999999999995, 0.80149999999999999,
    0.72770000000000001, 0.68620000000000003, 0.50049999999999994, 0.40529999999999999, 0.37509999999999999, 0.33729999999999999, 0.29530000000000001, 0.28249999999999997,
    0.25669999999999998, 0.31590000000000001, 0.53339999999999999, 0.4889, 0.63739999999999997, 0.70950000000000002, 0.80810000000000004, 0.74760000000000004,
    0.87339999999999995, 0.42330000000000001, 0.46400000000000002, 0.55069999999999997, 0.33069999999999999, 0.32590000000000002, 0.2848, 0.31680000000000003,
    0.32169999999999999, 0.11070000000000001, 0.25019999999999998, 0.38669999999999999, 0.50270000000000004, 0.621, 0.58979999999999999, 0.69740000000000002,
    0.78580000000000005, 0.81130000000000002, 0.63700000000000001, 0.53039999999999998, 0.56220000000000003, 0.39910000000000001, 0.41810000000000003, 0.26910000000000001,
    0.17519999999999999, 0.2712, 0.1827, 0.44359999999999999, 0.53410000000000002, 0.51490000000000002, 0.63339999999999996, 0.59360000000000002,
    0.76659999999999995, 0.82350000000000001, 0.749, 0.72760000000000002, 0.57469999999999999, 0.50770000000000004, 0.37980000000000003, 0.31209999999999999,
    0.31009999999999999, 0.27139999999999997, 0.22489999999999999, 0.40739999999999998, 0.48870000000000002, 0.37519999999999998, 0.38340000000000002, 0.68430000000000002,
    0.76980000000000004, 0.62539999999999996, 0.71079999999999999, 0.755, 0.84260000000000002, 0.40139999999999998, 0.62419999999999998, 0.3755,
    0.27410000000000001, 0.25629999999999997, 0.14169999999999999, 0.26690000000000003, 0.38440000000000002, 0.38719999999999999, 0.36680000000000001, 0.432};
static const double kSsimVal = 0.86248107040809974;

namespace {

TensorD grid16(const double* v) {
  TensorD t({16, 16});
  for (int64_t i = 0; i < 256; ++i) t.at(i) = v[i];
  return t;
}

}  // namespace

TEST_CASE("snr closed forms") {
  TensorD x({4});
  x.at(0) = 3.0;
  x.at(1) = 0.0;
  x.at(2) = -4.0;
  x.at(3) = 0.0;  // ||x||^2 = 25
  TensorD xh = x;
  xh.at(1) = 1.0;
  xh.at(3) = -2.0;  // error norm^2 = 5
  CHECK(snr_db(x, xh) == doctest::Approx(10.0 * std::log10(5.0)).epsilon(1e-12));

  // exact reconstruction reports +inf
  CHECK(std::isinf(snr_db(x, x)));
  CHECK(snr_db(x, x) > 0);

  // doubling the error costs about 6 dB
  TensorD xh2 = x;
  xh2.at(1) = 2.0;
  xh2.at(3) = -4.0;
  CHECK(snr_db(x, xh) - snr_db(x, xh2) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));

  TensorD bad({3});
  CHECK_THROWS_AS(snr_db(x, bad), std::invalid_argument);
}

TEST_CASE("psnr closed forms and the peak convention") {
  TensorD x({2, 2}, 0.5);
  TensorD xh = x;
  xh.at(0) = 0.6;  // MSE = 0.01/4
  double mse = 0.01 / 4.0;
  CHECK(psnr_db(x, xh) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));
  CHECK(psnr_db(x, xh, 2.0) == doctest::Approx(10.0 * std::log10(4.0 / mse)).epsilon(1e-9));
  CHECK(std::isinf(psnr_db(x, x)));
  CHECK_THROWS_AS(psnr_db(x, TensorD({3}), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(psnr_db(x, xh, 0.0), std::invalid_argument);
}

TEST_CASE("structural similarity matches the reference implementation") {
  TensorD a = grid16(kSsimA);
  TensorD b = grid16(kSsimB);
  CHECK(ssim(a, b) == doctest::Approx(kSsimVal).epsilon(1e-10));
  // symmetric in its arguments, exactly one on identical inputs
  CHECK(ssim(b, a) == doctest::Approx(kSsimVal).epsilon(1e-10));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  // bounded above by one for nonnegative signals
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("structural similarity input validation") {
  TensorD small({8, 8}, 0.5);  // narrower than the 11x11 window
  CHECK_THROWS_AS(ssim(small, small), std::invalid_argument);
  TensorD a({16, 16}, 0.5);
  TensorD wrong({16, 12}, 0.5);
  CHECK_THROWS_AS(ssim(a, wrong), std::invalid_argument);
  TensorD flat({256}, 0.5);  // must be rank-2
  CHECK_THROWS_AS(ssim(flat, flat), std::invalid_argument);
}

TEST_CASE("single precision overloads agree with double") {
  TensorD a = grid16(kSsimA);
  TensorD b = grid16(kSsimB);
  TensorF af = a.cast<float>();
  TensorF bf = b.cast<float>();
  CHECK(double(ssim(af, bf)) == doctest::Approx(kSsimVal).epsilon(1e-4));
  CHECK(snr_db(af, bf) == doctest::Approx(snr_db(a, b)).epsilon(1e-4));
  CHECK(psnr_db(af, bf) == doctest::Approx(psnr_db(a, b)).epsilon(1e-4));
}

TEST_CASE("metric csv layout") {
  std::string head = metric_csv_header();
  CHECK(head.back() == '\n');
  CHECK(head.find("dataset") != std::string::npos);
  CHECK(head.find("method") != std::string::npos);
  MetricReport r;
  r.name = "psnr";
  r.value = 31.25;
  r.peak = 1.0;
  r.n_items = 10;
  std::string row = metric_csv_row("toy", "DMC+DOC", 0.25, 0.0, r);
  CHECK(row.back() == '\n');
  CHECK(row.find("toy") != std::string::npos);
  CHECK(row.find("DMC+DOC") != std::string::npos);
  CHECK(row.find("31.25") != std::string::npos);
  auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(commas(head) == commas(row));
}
