#include "voxgan/container.hpp"
#include "voxgan/toy.hpp"
#include "voxgan/voxel.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

using namespace voxgan;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "voxgan_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(VOXGAN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string dir(const std::string& name) {
  const auto d = kRoot / name;
  fs::remove_all(d);
  return d.string();
}

std::size_t count_files(const fs::path& d, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(d)) n += e.path().extension() == ext;
  return n;
}

const std::string kSmall = " --res 8 --batch 4 --data toy:boxes --data-count 2 ";

// One trained checkpoint shared by the sampling tests.
const std::string& trained() {
  static const std::string path = [] {
    const std::string out = dir("trained");
    EXPECT_EQ(run("train --mode iwgan --epochs 2 --seed 3" + kSmall + "--out " + out), 0);
    return out + "/checkpoint.ckpt";
  }();
  return path;
}

}  // namespace

TEST(Cli, TrainSmoke) {
  const std::string out = dir("smoke");
  ASSERT_EQ(run("train --mode iwgan --data toy:boxes --res 8 --epochs 5 --batch 4 --data-count 2 --out " + out), 0);
  EXPECT_TRUE(fs::exists(out + "/checkpoint.ckpt"));
  EXPECT_TRUE(fs::exists(out + "/config.resolved"));
  const std::string csv = read_all(out + "/telemetry.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,epoch,d_loss,g_loss,gp_term,grad_norm_mean,e_loss");
  // 8 grids / batch 4 = 2 rows per epoch
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5 * 2);
  EXPECT_NE(csv.find("\n10,4,"), std::string::npos);
}

TEST(Cli, ZeroEpochsWritesSnapshotOnly) {
  const std::string out = dir("zero");
  ASSERT_EQ(run("train --epochs 0 --res 8 --out " + out), 0);
  EXPECT_TRUE(fs::exists(out + "/config.resolved"));
  EXPECT_FALSE(fs::exists(out + "/checkpoint.ckpt"));
  EXPECT_NE(read_all(out + "/config.resolved").find("res = 8\n"), std::string::npos);
}

TEST(Cli, SameSeedSameBytes) {
  const std::string a = dir("rep_a"), b = dir("rep_b");
  ASSERT_EQ(run("train --epochs 2 --seed 4" + kSmall + "--out " + a), 0);
  ASSERT_EQ(run("train --epochs 2 --seed 4" + kSmall + "--out " + b), 0);
  EXPECT_EQ(read_all(a + "/checkpoint.ckpt"), read_all(b + "/checkpoint.ckpt"));
  EXPECT_EQ(read_all(a + "/telemetry.csv"), read_all(b + "/telemetry.csv"));
}

TEST(Cli, ConfigFileAndOverrides) {
  const std::string out = dir("cfg");
  fs::create_directories(out);
  write_all(out + "/run.cfg", "res = 8\nbatch = 4\nepochs = 1\ndata = toy:ells\ndata_count = 2\nlambda = 3\n");
  ASSERT_EQ(run("train --config " + out + "/run.cfg --lambda 7 --out " + out), 0);
  const std::string resolved = read_all(out + "/config.resolved");
  EXPECT_NE(resolved.find("lambda = 7\n"), std::string::npos);
  EXPECT_NE(resolved.find("data = toy:ells\n"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const std::string out = dir("errors");
  fs::create_directories(out);
  write_all(out + "/bad.cfg", "res = 8\nbogus = 1\n");
  EXPECT_EQ(run("train --config " + out + "/bad.cfg --out " + out), 2);
  EXPECT_EQ(run("train --mode gan --out " + out), 2);
  EXPECT_EQ(run("train --batch 1 --out " + out), 2);
  EXPECT_EQ(run("train --res 8 --epochs 1 --data " + out + "/missing --out " + out), 3);
  EXPECT_EQ(run("generate --checkpoint " + out + "/bad.cfg --out " + out), 3);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, GuardTripExitsFour) {
  const std::string out = dir("guard");
  // a learning rate this large drives the critic to overflow
  fs::create_directories(out);
  write_all(out + "/run.cfg", "lr_discriminator = 1e300\nlr_generator = 1e300\n");
  const int code = run("train --config " + out + "/run.cfg --epochs 50" + kSmall + "--out " + out);
  EXPECT_EQ(code, 4);
  EXPECT_TRUE(fs::exists(out + "/guard.ckpt"));
  const std::string csv = read_all(out + "/telemetry.csv");
  EXPECT_EQ(csv.find("nan"), std::string::npos);
  EXPECT_EQ(csv.find("inf"), std::string::npos);
}

TEST(Cli, GenerateCountAndDeterminism) {
  const std::string a = dir("gen_a"), b = dir("gen_b");
  ASSERT_EQ(run("generate --checkpoint " + trained() + " --count 3 --seed 9 --binvox --out " + a), 0);
  ASSERT_EQ(run("generate --checkpoint " + trained() + " --count 3 --seed 9 --binvox --out " + b), 0);
  EXPECT_EQ(count_files(a, ".vxg"), 3u);
  EXPECT_EQ(count_files(a, ".binvox"), 3u);
  for (int i = 0; i < 3; ++i) {
    const std::string f = "/sample_00" + std::to_string(i) + ".vxg";
    EXPECT_EQ(read_all(a + f), read_all(b + f));
    VoxelGrid g = read_vxg(a + f);
    EXPECT_EQ(g.extent(), 8);
    EXPECT_NO_THROW(g.binarized(0.5f));
  }
}

TEST(Cli, InterpolationEndpointsMatchGenerate) {
  const std::string i = dir("interp"), ga = dir("interp_a"), gb = dir("interp_b");
  ASSERT_EQ(run("interpolate --checkpoint " + trained() + " --seed-a 5 --seed-b 6 --steps 2 --out " + i), 0);
  ASSERT_EQ(run("generate --checkpoint " + trained() + " --count 1 --seed 5 --out " + ga), 0);
  ASSERT_EQ(run("generate --checkpoint " + trained() + " --count 1 --seed 6 --out " + gb), 0);
  EXPECT_EQ(read_vxg(i + "/interp_000.vxg"), read_vxg(ga + "/sample_000.vxg"));
  EXPECT_EQ(read_vxg(i + "/interp_001.vxg"), read_vxg(gb + "/sample_000.vxg"));
  const std::string five = dir("interp5");
  ASSERT_EQ(run("interpolate --checkpoint " + trained() + " --steps 5 --out " + five), 0);
  EXPECT_EQ(count_files(five, ".vxg"), 5u);
  EXPECT_TRUE(fs::exists(five + "/interp_004.vxg"));
  EXPECT_EQ(run("interpolate --checkpoint " + trained() + " --steps 1 --out " + five), 2);
}

TEST(Cli, ScanSolidCube) {
  const std::string out = dir("scan");
  fs::create_directories(out);
  write_binvox(make_box(8, {0, 0, 0}, {8, 8, 8}), out + "/cube.binvox");
  ASSERT_EQ(run("scan --grid " + out + "/cube.binvox --view -x --out " + out), 0);
  const std::string pgm = read_all(out + "/depth.pgm");
  EXPECT_EQ(pgm, "P5\n8 8\n255\n" + std::string(64, '\xff'));
  EXPECT_EQ(read_vxg(out + "/shell.vxg").count(), 64);
  EXPECT_EQ(run("scan --grid " + out + "/cube.binvox --view up --out " + out), 3);
}

TEST(Cli, EvaluateCopyAndNearest) {
  const std::string out = dir("eval");
  ASSERT_EQ(run("evaluate --model copy --res 8 --data toy:mixed --data-count 3 --orientations 1 --out " + out), 0);
  auto j = nlohmann::json::parse(read_all(out + "/report.json"));
  EXPECT_DOUBLE_EQ(j["mean_ap"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["mean_iou"].get<double>(), 1.0);
  ASSERT_EQ(run("evaluate --model nearest --res 8 --data toy:mixed --data-count 3 --orientations 1 --out " + out), 0);
  EXPECT_EQ(run("evaluate --model magic --res 8 --out " + out), 2);
}

TEST(Cli, CompleteWithVaeCheckpoint) {
  const std::string out = dir("vae");
  ASSERT_EQ(run("train --mode vae-iwgan --epochs 1 --res 8 --batch 4 --data toy:boxes --data-count 2 "
                "--orientations 1 --out " + out),
            0);
  Rng rng(1);
  write_vxg(occlude_to_grid(depth_scan(make_box(8, {1, 1, 1}, {6, 6, 6}), View::PosZ), 8), out + "/shell.vxg");
  ASSERT_EQ(run("complete --checkpoint " + out + "/checkpoint.ckpt --grid " + out + "/shell.vxg --out " + out +
                "/done.vxg"),
            0);
  EXPECT_EQ(read_vxg(out + "/done.vxg").extent(), 8);
  EXPECT_EQ(run("evaluate --checkpoint " + out + "/checkpoint.ckpt --out " + out), 0);
  // iwgan checkpoints have no encoder
  EXPECT_EQ(run("complete --checkpoint " + trained() + " --grid " + out + "/shell.vxg --out " + out + "/x.vxg"), 2);
}
