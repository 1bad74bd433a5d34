#include "radsem/scene.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace radsem;

TEST(GenerateScene, GroundOnlyWhenFeatureCountsZero) {
  SceneConfig cfg;
  cfg.tree_count = 0;
  cfg.pole_count = 0;
  cfg.wire_count = 0;
  const Scene scene = generate_scene(cfg, 1);
  ASSERT_FALSE(scene.scatterers.empty());
  for (const auto& s : scene.scatterers) EXPECT_EQ(s.label, ClassLabel::kGround);
}

TEST(GenerateScene, DeterministicPerSeed) {
  const SceneConfig cfg;
  const Scene a = generate_scene(cfg, 42);
  const Scene b = generate_scene(cfg, 42);
  ASSERT_EQ(a.scatterers.size(), b.scatterers.size());
  for (std::size_t i = 0; i < a.scatterers.size(); ++i) {
    EXPECT_EQ(a.scatterers[i].position, b.scatterers[i].position);
    EXPECT_EQ(a.scatterers[i].label, b.scatterers[i].label);
  }
  const Scene c = generate_scene(cfg, 43);
  EXPECT_NE(a.scatterers.size() == c.scatterers.size() &&
                std::equal(a.scatterers.begin(), a.scatterers.end(), c.scatterers.begin(),
                           [](const Scatterer& x, const Scatterer& y) {
                             return x.position == y.position;
                           }),
            true);
}

TEST(GenerateScene, NoFreeLabelsAndInsideExtent) {
  const SceneConfig cfg;
  const Scene scene = generate_scene(cfg, 3);
  for (const auto& s : scene.scatterers) {
    EXPECT_NE(s.label, ClassLabel::kFree);
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(s.position[a], scene.extent_min[a] - 1e-6);
      EXPECT_LE(s.position[a], scene.extent_max[a] + 1e-6);
    }
  }
}

TEST(GenerateScene, WiresHangNearTheirPoleTops) {
  const SceneConfig cfg;
  const Scene scene = generate_scene(cfg, 7);

  // Recover pole tops: highest pole scatterer per (x, y) column.
  std::vector<Eigen::Vector3f> tops;
  for (const auto& s : scene.scatterers) {
    if (s.label != ClassLabel::kPole) continue;
    bool merged = false;
    for (auto& t : tops)
      if ((t.head<2>() - s.position.head<2>()).norm() < 1e-3) {
        t.z() = std::max(t.z(), s.position.z());
        merged = true;
      }
    if (!merged) tops.push_back(s.position);
  }
  ASSERT_GE(tops.size(), 2u);

  int wire_points = 0;
  for (const auto& s : scene.scatterers) {
    if (s.label != ClassLabel::kWire) continue;
    ++wire_points;
    // Two nearest pole tops.
    float d1 = std::numeric_limits<float>::max(), d2 = d1;
    Eigen::Vector3f t1, t2;
    for (const auto& t : tops) {
      const float d = (t - s.position).norm();
      if (d < d1) {
        d2 = d1;
        t2 = t1;
        d1 = d;
        t1 = t;
      } else if (d < d2) {
        d2 = d;
        t2 = t;
      }
    }
    const float span = (t2 - t1).norm();
    const float sag_tol = float(cfg.wire_sag_fraction) * span + 0.35f;  // plus stacking offset
    EXPECT_LE(s.position.z(), std::max(t1.z(), t2.z()) + 1e-4f);
    EXPECT_GE(s.position.z(), std::min(t1.z(), t2.z()) - sag_tol);
  }
  EXPECT_GT(wire_points, 0);
}

TEST(GenerateScene, RejectsImpossibleExtents) {
  SceneConfig cfg;
  cfg.extent_max = cfg.extent_min + Eigen::Vector3d{10.0, 10.0, 2.0};
  cfg.pole_height_m = 6.0;  // taller than the extent
  EXPECT_THROW(generate_scene(cfg, 1), ConfigError);

  SceneConfig wires_without_poles;
  wires_without_poles.pole_count = 1;
  wires_without_poles.wire_count = 2;
  EXPECT_THROW(generate_scene(wires_without_poles, 1), ConfigError);
}

TEST(GenerateTrajectory, SinglePoseAtStart) {
  TrajectoryConfig cfg;
  cfg.frame_count = 1;
  const auto poses = generate_trajectory(cfg, 9);
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_EQ(poses[0].translation, cfg.start);
  EXPECT_TRUE(poses[0].is_orthonormal());
}

TEST(GenerateTrajectory, ZeroVelocityGivesIdenticalPoses) {
  TrajectoryConfig cfg;
  cfg.frame_count = 5;
  cfg.speed_mps = 0.0;
  const auto poses = generate_trajectory(cfg, 2);
  ASSERT_EQ(poses.size(), 5u);
  for (const auto& p : poses) {
    EXPECT_EQ(p.translation, poses[0].translation);
    EXPECT_EQ(p.rotation, poses[0].rotation);
  }
}

TEST(GenerateTrajectory, StepLengthMatchesSpeed) {
  TrajectoryConfig cfg;
  const auto poses = generate_trajectory(cfg, 3);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const double step = (poses[i].translation - poses[i - 1].translation).norm();
    EXPECT_NEAR(step, cfg.speed_mps * cfg.frame_period_s, 1e-6);
  }
}

TEST(GenerateTrajectory, TimestampsFollowFramePeriod) {
  TrajectoryConfig cfg;
  const auto poses = generate_trajectory(cfg, 3);
  for (std::size_t i = 0; i < poses.size(); ++i)
    EXPECT_DOUBLE_EQ(poses[i].timestamp, double(i) * cfg.frame_period_s);
}

TEST(RenderLidar, OutOfRangeScattererGivesEmptyCloud) {
  Scene scene;
  scene.extent_min = {-100, -100, -100};
  scene.extent_max = {100, 100, 100};
  scene.scatterers.push_back({{50.0f, 0.0f, 0.0f}, 1.0f, ClassLabel::kTree});
  const auto cloud = render_lidar(scene, PoseSE3{}, FovConfig{}, 1, 0.0);
  EXPECT_TRUE(cloud.empty());
}

TEST(RenderLidar, IdentityPosePassThrough) {
  Scene scene;
  scene.scatterers.push_back({{10.0f, 0.0f, 0.0f}, 1.0f, ClassLabel::kPole});
  const auto cloud = render_lidar(scene, PoseSE3{}, FovConfig{}, 1, 0.0);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud.points[0], Eigen::Vector3f(10, 0, 0));
  EXPECT_EQ(cloud.labels[0], ClassLabel::kPole);
}

TEST(RenderLidar, OutputInsideFrustum) {
  const Scene scene = generate_scene(SceneConfig{}, 5);
  TrajectoryConfig tcfg;
  const auto poses = generate_trajectory(tcfg, 5);
  const FovConfig fov;
  for (const auto& pose : poses) {
    const auto cloud = render_lidar(scene, pose, fov, 11, 0.05);
    for (const auto& p : cloud.points) EXPECT_TRUE(fov.contains(p.cast<double>()));
  }
}

TEST(RenderLidar, JitterIsSeedDeterministic) {
  const Scene scene = generate_scene(SceneConfig{}, 5);
  const PoseSE3 pose = generate_trajectory(TrajectoryConfig{}, 5)[0];
  const auto a = render_lidar(scene, pose, FovConfig{}, 77, 0.05);
  const auto b = render_lidar(scene, pose, FovConfig{}, 77, 0.05);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.points[i], b.points[i]);
}
