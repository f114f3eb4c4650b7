#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fisherlens/fisherlens.h"

namespace fs = std::filesystem;

TEST(CApi, NetworkLifecycleAndForward) {
  const size_t widths[] = {2};
  fl_network* net = nullptr;
  ASSERT_EQ(fl_network_create(1, widths, 1, FL_ACT_NONE, 0, &net), FL_OK);
  EXPECT_EQ(fl_network_input_dim(net), 1u);
  EXPECT_EQ(fl_network_num_classes(net), 2u);
  double x = 0.3, p[2];
  ASSERT_EQ(fl_network_forward(net, &x, 1, p, 2), FL_OK);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  EXPECT_EQ(fl_network_forward(net, &x, 1, p, 3), FL_ERR_DIMENSION);
  EXPECT_NE(std::string(fl_last_error()), "");
  fl_network_free(net);
}

TEST(CApi, CheckpointRoundTripAndFisher) {
  const size_t widths[] = {6, 3};
  fl_network* net = nullptr;
  ASSERT_EQ(fl_network_create(4, widths, 2, FL_ACT_TANH, 7, &net), FL_OK);
  const auto path = (fs::temp_directory_path() / "fisherlens_capi.flnet").string();
  ASSERT_EQ(fl_network_save(net, path.c_str()), FL_OK);
  fl_network* back = nullptr;
  ASSERT_EQ(fl_network_load(path.c_str(), &back), FL_OK);
  const double x[4] = {0.1, 0.5, 0.2, 0.9};
  double pa[3], pb[3];
  fl_network_forward(net, x, 4, pa, 3);
  fl_network_forward(back, x, 4, pb, 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(pa[i], pb[i]);

  std::vector<double> f(16), j(12);
  ASSERT_EQ(fl_fisher_matrix(net, x, 4, f.data(), f.size()), FL_OK);
  ASSERT_EQ(fl_network_jacobian_logp(net, x, 4, j.data(), j.size()), FL_OK);
  double ref00 = 0.0;
  for (int c = 0; c < 3; ++c) ref00 += pa[c] * j[c * 4] * j[c * 4];
  EXPECT_NEAR(f[0], ref00, 1e-12);
  fl_fisher_stats st;
  ASSERT_EQ(fl_fisher_stats_at(net, x, 4, 1, &st), FL_OK);
  EXPECT_LE(st.lambda_max, st.trace + 1e-9);
  EXPECT_GE(st.fro_norm, st.lambda_max - 1e-8);
  EXPECT_NEAR(st.cramer_rao, 1.0 / st.lambda_max, 1e-12);
  fl_network_free(net);
  fl_network_free(back);
  fs::remove(path);
}

TEST(CApi, Divergences) {
  const double p[2] = {0.5, 0.5}, q[2] = {0.25, 0.75};
  double v = 0;
  ASSERT_EQ(fl_kl(p, q, 2, &v), FL_OK);
  EXPECT_NEAR(v, 0.143841036225890, 1e-14);
  const double a[2] = {1, 0}, b[2] = {0, 1};
  ASSERT_EQ(fl_js(a, b, 2, &v), FL_OK);
  EXPECT_NEAR(v, std::log(2.0), 1e-15);
  ASSERT_EQ(fl_cross_entropy(1, q, 2, &v), FL_OK);
  EXPECT_NEAR(v, -std::log(0.75), 1e-15);
}

TEST(CApi, ErrorsMapToStatusCodes) {
  fl_network* net = nullptr;
  EXPECT_EQ(fl_network_load("/nonexistent/x.flnet", &net), FL_ERR_IO);
  EXPECT_EQ(net, nullptr);
  EXPECT_EQ(fl_network_create(1, nullptr, 0, FL_ACT_NONE, 0, &net), FL_ERR_NULL_ARGUMENT);
  const size_t widths[] = {1};
  EXPECT_EQ(fl_network_create(1, widths, 1, FL_ACT_RELU, 0, &net), FL_ERR_CONTRACT);
  EXPECT_STREQ(fl_status_name(FL_ERR_FORMAT), "format");
  EXPECT_EQ(fl_cmd_train("/nonexistent/config.json", nullptr, nullptr), FL_ERR_IO);
}

TEST(CApi, DatasetAndCckl) {
  const fs::path dir = fs::temp_directory_path() / "fisherlens_capi_data";
  fs::create_directories(dir);
  std::ofstream(dir / "g.json") << R"({"glyphs": {"num_classes": 3, "n_per_class": 10, "seed": 1}, "prefix": "g"})";
  const uint64_t seed = 5;
  ASSERT_EQ(fl_cmd_synth_idx((dir / "g.json").c_str(), dir.c_str(), &seed), FL_OK) << fl_last_error();
  fl_dataset* ds = nullptr;
  ASSERT_EQ(fl_dataset_load_idx((dir / "g-train-images-idx3-ubyte").c_str(),
                                (dir / "g-train-labels-idx1-ubyte").c_str(), 100, &ds),
            FL_OK);
  EXPECT_EQ(fl_dataset_size(ds), 24u);
  EXPECT_EQ(fl_dataset_dim(ds), 64u);
  std::vector<double> row(64);
  size_t label = 99;
  ASSERT_EQ(fl_dataset_row(ds, 0, row.data(), row.size(), &label), FL_OK);
  EXPECT_LT(label, 3u);
  const size_t widths[] = {8, 3};
  fl_network* net = nullptr;
  ASSERT_EQ(fl_network_create(64, widths, 2, FL_ACT_RELU, 3, &net), FL_OK);
  double c = -1;
  ASSERT_EQ(fl_cckl(net, ds, 0, 0, &c), FL_OK);
  EXPECT_GE(c, 0.0);
  fl_network_free(net);
  fl_dataset_free(ds);
  fs::remove_all(dir);
}
