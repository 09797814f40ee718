#pragma once

// Synthetic event-camera data: an orbiting look-at camera, a Lambertian ray
// caster over primitive or mesh scenes, and contrast-threshold event synthesis.

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "e2v/common.hpp"
#include "e2v/events.hpp"
#include "e2v/voxel.hpp"

namespace e2v {

struct TrajectoryConfig {
  double duration = 0.5;  ///< seconds
  double fps = 240.0;
  double z_start = 2.0;
  double z_end = -2.0;
  double r_min = 4.0;
  double r_max = 6.0;
  double revolutions = 1.0;

  void validate() const;
  /// floor(duration * fps), snapped so that 0.5 * 240 gives exactly 120.
  Index frame_count() const;

  bool operator==(const TrajectoryConfig&) const = default;
};

struct CameraIntrinsics {
  double focal_mm = 80.0;
  double sensor_width_mm = 36.0;
  Index width = 64;
  Index height = 64;

  double focal_pixels() const { return focal_mm / sensor_width_mm * static_cast<double>(width); }
  void validate() const;

  static CameraIntrinsics full() { return {80.0, 36.0, 512, 512}; }

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Camera frame: columns of `rotation` are right, up and forward.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

  Eigen::Vector3d right() const { return rotation.col(0); }
  Eigen::Vector3d up() const { return rotation.col(1); }
  Eigen::Vector3d forward() const { return rotation.col(2); }
};

/// Look-at frame with world +z as the up reference. The position must not lie
/// on the z axis through the target.
Pose look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target = Eigen::Vector3d::Zero());

/// Position on the orbit at time t in [0, T], looking at the origin.
Pose camera_pose(const TrajectoryConfig& cfg, double t);

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  ///< unit length
};

/// Primary ray through the centre of pixel (u, v); u is the column, v the row
/// (row 0 at the top).
Ray pixel_ray(const Pose& pose, const CameraIntrinsics& cam, Index u, Index v);

struct Hit {
  double distance = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();  ///< unit, facing the ray origin
  double albedo = 1.0;
};

enum class PrimitiveKind { sphere, box, cylinder };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;                                              ///< sphere, cylinder
  Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.25);  ///< box
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();                  ///< cylinder, unit length
  double half_height = 0.25;                                        ///< cylinder
  double albedo = 0.8;

  static Primitive sphere(const Eigen::Vector3d& c, double r, double albedo = 0.8);
  static Primitive box(const Eigen::Vector3d& c, const Eigen::Vector3d& half, double albedo = 0.8);
  static Primitive cylinder(const Eigen::Vector3d& c, const Eigen::Vector3d& axis, double r, double half_height,
                            double albedo = 0.8);

  bool contains(const Eigen::Vector3d& p) const;
  std::optional<Hit> intersect(const Ray& ray) const;
  void validate() const;  ///< InvalidSceneSpec on non-positive sizes or a zero axis
};

class MeshBvh;

/// Either a union of primitives or one triangle mesh. Geometry lives in the
/// unit cube centred on the origin.
class Scene {
 public:
  Scene();
  ~Scene();
  Scene(const Scene&);
  Scene& operator=(const Scene&);
  Scene(Scene&&) noexcept;
  Scene& operator=(Scene&&) noexcept;

  static Scene from_primitives(std::vector<Primitive> primitives);
  /// The mesh is normalized into the unit cube and centred on the origin.
  static Scene from_mesh(const TriMesh& mesh, double albedo = 0.8);

  bool empty() const;
  bool is_mesh() const { return static_cast<bool>(bvh_); }
  const std::vector<Primitive>& primitives() const { return primitives_; }
  /// Unit-cube normalized copy of the mesh (coordinates in [0, 1]).
  const TriMesh& mesh() const { return mesh_; }

  std::optional<Hit> intersect(const Ray& ray) const;

  /// R^3 occupancy over [-0.5, 0.5]^3: primitive scenes test cell centres,
  /// mesh scenes go through voxelize() with interior fill.
  VoxelGrid labels(Index resolution) const;

 private:
  std::vector<Primitive> primitives_;
  TriMesh mesh_;
  double mesh_albedo_ = 0.8;
  std::unique_ptr<MeshBvh> bvh_;
};

struct Light {
  Eigen::Vector3d direction;  ///< unit vector towards the light
  double intensity = 1.0;
};

/// Key light from +z, a weaker one from -z and an oblique fill in the x-z
/// plane. The peak sum stays below 1, so unoccluded surfaces never clip.
std::vector<Light> default_lights();

/// Row-major H x W intensities in [0, 1].
using Image = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Image render_frame(const Scene& scene, const Pose& pose, const CameraIntrinsics& cam,
                   const std::vector<Light>& lights = default_lights(), int threads = 1);

/// Incremental contrast-threshold synthesizer; feed frames in time order.
class EventSynthesizer {
 public:
  EventSynthesizer(Index width, Index height, double fps, double contrast, double eps_log = 1e-3);

  void push(const Image& frame);
  Index frames() const { return frames_; }
  /// Sorted by (t, row-major pixel index); duration is frames / fps.
  EventStream finish() const;

 private:
  Index width_, height_;
  double fps_, contrast_, eps_log_;
  Index frames_ = 0;
  Eigen::ArrayXd prev_;          ///< log intensity of the previous frame
  Eigen::ArrayXd base_;          ///< log intensity at the first frame
  Eigen::ArrayX<std::int64_t> level_;  ///< reference = base + level * C
  std::vector<Event> events_;
};

EventStream video_to_events(const std::vector<Image>& frames, double fps, double contrast, double eps_log = 1e-3);

struct SampleConfig {
  TrajectoryConfig trajectory;
  CameraIntrinsics camera;
  double contrast = 0.2;
  double eps_log = 1e-3;
  Index label_resolution = 32;

  bool operator==(const SampleConfig&) const = default;
};

struct GeneratedSample {
  EventStream events;
  VoxelGrid labels;
  Index frame_count = 0;
};

/// Renders floor(T * fps) frames at t = k / fps, converts them to events and
/// voxelizes the scene.
GeneratedSample generate_sample(const Scene& scene, const SampleConfig& cfg, int threads = 1);

/// Procedural scene categories understood by random_scene.
const std::vector<std::string>& procedural_categories();

/// Random scene of the given category, a pure function of the generator state.
Scene random_scene(const std::string& category, Rng& rng);

}  // namespace e2v
