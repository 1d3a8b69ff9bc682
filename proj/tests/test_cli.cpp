#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "miro/io.hpp"
#include "miro/model.hpp"
#include "miro/rng.hpp"

namespace fs = std::filesystem;
using namespace miro;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("miro_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct RemoveScratch {
  ~RemoveScratch() {
    std::error_code ec;
    fs::remove_all(fs::temp_directory_path() / ("miro_cli_test_" + std::to_string(::getpid())), ec);
  }
} remove_scratch;

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + scratch().string() + "' && " + env + " '" MIRO_CLI_PATH "' " + args + " > log.txt 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path at(const std::string& rel) { return scratch() / rel; }

std::size_t cluster_count(const fs::path& csv) {
  std::set<int> ids;
  const auto file = io::read_cloud(csv);
  for (int l : file.data.truth().labels())
    if (l >= 0) ids.insert(l);
  return ids.size();
}

void write(const std::string& rel, const std::string& text) { io::write_atomic(at(rel), text); }

}  // namespace

TEST_CASE("simulate writes clouds and a manifest") {
  REQUIRE(run_cli("simulate --preset scenario8 --count 5 --seed 7 --out sim_a") == 0);
  for (int i = 0; i < 5; ++i) CHECK(cluster_count(at("sim_a/cloud_0000" + std::to_string(i) + ".csv")) == 20);
  CHECK(fs::exists(at("sim_a/manifest.json")));

  REQUIRE(run_cli("simulate --preset scenario8 --count 5 --seed 7 --out sim_b") == 0);
  for (int i = 0; i < 5; ++i) {
    const std::string name = "/cloud_0000" + std::to_string(i) + ".csv";
    CHECK(io::read_text(at("sim_a" + name)) == io::read_text(at("sim_b" + name)));
  }

  REQUIRE(run_cli("simulate --preset scenario8 --count 0 --out sim_empty") == 0);
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(at("sim_empty"))) entries += e.path().filename() != "manifest.json";
  CHECK(entries == 0);
  CHECK(fs::exists(at("sim_empty/manifest.json")));

  CHECK(run_cli("simulate --preset nope --out sim_bad") != 0);
  CHECK_FALSE(fs::exists(at("sim_bad")));
  CHECK(io::read_text(at("log.txt")).find("scenario8") != std::string::npos);

  REQUIRE(run_cli("simulate --preset scenario8 --count 1 --seed 3 --out sim_env", "MIRO_SEED=7") == 0);
  CHECK(io::read_text(at("sim_env/cloud_00000.csv")) == io::read_text(at("sim_a/cloud_00000.csv")));
}

TEST_CASE("train fixtures") {
  REQUIRE(run_cli("simulate --preset scenario8 --count 4 --seed 1 --out train_data") == 0);

  // Zero learning rate leaves the initial parameters untouched, whatever the epoch count.
  write("zero_lr.json", R"({"model":{"latent_dim":8,"K":2},"train":{"epochs":1,"learning_rate":0,"batch_size":2}})");
  write("zero_lr2.json", R"({"model":{"latent_dim":8,"K":2},"train":{"epochs":3,"learning_rate":0,"batch_size":2}})");
  REQUIRE(run_cli("train --quiet --data train_data --config zero_lr.json --seed 5 --out lr0_a") == 0);
  REQUIRE(run_cli("train --quiet --data train_data --config zero_lr2.json --seed 5 --out lr0_b") == 0);
  CHECK(load_params(at("lr0_a/model.json")) == load_params(at("lr0_b/model.json")));
  CHECK(load_params(at("lr0_a/model.json")) == init_params(load_params(at("lr0_a/model.json")).config, derive_seed(5, 0x1417)));

  // Short convergence run.
  write("conv.json", R"({"model":{"latent_dim":8,"K":2},"train":{"epochs":8,"learning_rate":0.003,"batch_size":2}})");
  REQUIRE(run_cli("train --quiet --data train_data --config conv.json --seed 2 --out conv") == 0);
  std::istringstream loss(io::read_text(at("conv/loss.csv")));
  std::string line;
  std::vector<double> totals;
  std::getline(loss, line);
  CHECK(line == "epoch,L_total,L_r,L_d,L_class");
  while (std::getline(loss, line)) totals.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(totals.size() == 8);
  CHECK(totals.back() < totals.front());

  // Resuming from a checkpoint reproduces the uninterrupted run.
  write("r4.json", R"({"model":{"latent_dim":8,"K":2},"train":{"epochs":4,"learning_rate":0.003,"batch_size":2,"checkpoint_every":2}})");
  write("r2.json", R"({"model":{"latent_dim":8,"K":2},"train":{"epochs":2,"learning_rate":0.003,"batch_size":2,"checkpoint_every":2}})");
  REQUIRE(run_cli("train --quiet --data train_data --config r4.json --seed 9 --out full") == 0);
  REQUIRE(run_cli("train --quiet --data train_data --config r2.json --seed 9 --out part") == 0);
  REQUIRE(run_cli("train --quiet --data train_data --config r4.json --seed 9 --out part --resume") == 0);
  CHECK(io::read_text(at("full/model.json")) == io::read_text(at("part/model.json")));
  CHECK(io::read_text(at("full/loss.csv")) == io::read_text(at("part/loss.csv")));

  fs::create_directories(at("unlabeled"));
  write("unlabeled/a.csv", "x_nm,y_nm\n1,2\n3,4\n5,6\n");
  CHECK(run_cli("train --quiet --data unlabeled --config conv.json --out bad_run") != 0);
  CHECK(io::read_text(at("log.txt")).find("unlabeled") != std::string::npos);
  CHECK_FALSE(fs::exists(at("bad_run")));
}

TEST_CASE("infer and evaluate") {
  REQUIRE(run_cli("simulate --preset scenario8 --count 2 --seed 4 --out inf_data") == 0);
  ModelConfig mc;
  mc.latent_dim = 8;
  mc.K = 2;
  auto zero = init_params(mc, 1);
  zero.set_zero();
  save_params(at("zero_model.json"), zero);

  REQUIRE(run_cli("infer --input inf_data/cloud_00000.csv --model zero_model.json --eps 25 --min-pts 3 --out with_zero "
               "--collapsed --svg --dump-graph") == 0);
  REQUIRE(run_cli("infer --input inf_data/cloud_00000.csv --no-miro --eps 25 --min-pts 3 --out no_miro") == 0);
  CHECK(io::read_text(at("with_zero/clustered.csv")) == io::read_text(at("no_miro/clustered.csv")));
  CHECK(io::read_text(at("with_zero/graph_edges.csv")).rfind("i,j,dist_nm,dir_x,dir_y\n", 0) == 0);
  CHECK(io::read_text(at("with_zero/clusters.svg")).find("#b0b0b0") != std::string::npos);
  CHECK(fs::exists(at("with_zero/collapsed.csv")));
  CHECK(fs::exists(at("with_zero/manifest.json")));

  CHECK(run_cli("infer --input inf_data/cloud_00000.csv --model missing.json --out infer_bad") != 0);
  CHECK_FALSE(fs::exists(at("infer_bad")));

  REQUIRE(run_cli("evaluate --truth inf_data --pred inf_data --out eval_same") == 0);
  std::istringstream rows(io::read_text(at("eval_same/metrics.csv")));
  std::string header, row;
  std::getline(rows, header);
  CHECK(header == "field,ari_dagger,iou,ji_c,rmsre_n,rmse_xy,ami,ari_c,ari,n_clusters_gt,n_clusters_pred");
  int fields = 0;
  while (std::getline(rows, row)) {
    ++fields;
    CHECK(row.find(",1,1,1,0,0,1,1,1,20,20") != std::string::npos);
  }
  CHECK(fields == 2);
  CHECK(io::read_text(at("eval_same/summary.csv")).find("ari_dagger,1,0,2,1.00 ± 0.00") != std::string::npos);
}

TEST_CASE("bench emits a comparison per distance and method") {
  ModelConfig mc;
  mc.latent_dim = 8;
  mc.K = 2;
  save_params(at("bench_model.json"), init_params(mc, 2));
  write("bench.json", R"({"eps_grid":[20,40],"min_pts_grid":[5]})");
  REQUIRE(run_cli("bench --quiet --preset pairtest --distances 1,2,3,4 --unit sigma --model bench_model.json "
               "--config bench.json --seeds 4 --tune-seeds 2 --out bench_out") == 0);
  std::istringstream csv(io::read_text(at("bench_out/comparison.csv")));
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("distance,distance_nm,method,eps,min_pts,n,ari_dagger_mean", 0) == 0);
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 8);
}
