#include "e2v/evsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "e2v/parallel.hpp"

namespace e2v {

using Eigen::Vector3d;

namespace {

constexpr double kHitEpsilon = 1e-9;

Hit facing(double distance, Vector3d normal, const Ray& ray, double albedo) {
  if (normal.dot(ray.direction) > 0.0) normal = -normal;
  return Hit{distance, normal, albedo};
}

std::optional<Hit> nearest(std::optional<Hit> a, const std::optional<Hit>& b) {
  if (b && (!a || b->distance < a->distance)) return b;
  return a;
}

}  // namespace

void TrajectoryConfig::validate() const {
  if (!(duration > 0.0) || !(fps > 0.0)) throw Error(Errc::InvalidSceneSpec, "trajectory needs T > 0 and fps > 0");
  if (!(r_min > 0.0) || r_min > r_max) throw Error(Errc::InvalidSceneSpec, "trajectory needs 0 < r_min <= r_max");
  if (z_start == 0.0) throw Error(Errc::InvalidSceneSpec, "trajectory z_start must be non-zero");
}

Index TrajectoryConfig::frame_count() const {
  return static_cast<Index>(std::floor(duration * fps + 1e-9));
}

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0 || !(focal_mm > 0.0) || !(sensor_width_mm > 0.0)) {
    throw Error(Errc::InvalidSceneSpec, "camera needs positive resolution, focal length and sensor width");
  }
}

Pose look_at(const Vector3d& position, const Vector3d& target) {
  const Vector3d f = (target - position).normalized();
  const Vector3d side = f.cross(Vector3d::UnitZ());
  if (side.norm() < 1e-12) throw Error(Errc::InvalidSceneSpec, "look-at direction is parallel to world z");
  const Vector3d right = side.normalized();
  const Vector3d up = right.cross(f);
  Pose pose;
  pose.position = position;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = up;
  pose.rotation.col(2) = f;
  return pose;
}

Pose camera_pose(const TrajectoryConfig& cfg, double t) {
  cfg.validate();
  if (!(t >= 0.0 && t <= cfg.duration)) {
    throw Error(Errc::TimeOutOfRange, "t = " + std::to_string(t) + " outside [0, " + std::to_string(cfg.duration) + "]");
  }
  const double s = t / cfg.duration;
  const double z = cfg.z_start + (cfg.z_end - cfg.z_start) * s;
  const double r = cfg.r_min + (cfg.r_max - cfg.r_min) * (1.0 - std::abs(z) / std::abs(cfg.z_start));
  const double theta = 2.0 * std::numbers::pi * cfg.revolutions * s;
  return look_at(Vector3d(r * std::cos(theta), r * std::sin(theta), z));
}

Ray pixel_ray(const Pose& pose, const CameraIntrinsics& cam, Index u, Index v) {
  const double a = static_cast<double>(u) + 0.5 - 0.5 * static_cast<double>(cam.width);
  const double b = static_cast<double>(v) + 0.5 - 0.5 * static_cast<double>(cam.height);
  const Vector3d dir = pose.forward() * cam.focal_pixels() + a * pose.right() - b * pose.up();
  return Ray{pose.position, dir.normalized()};
}

// ---------------------------------------------------------------- primitives

Primitive Primitive::sphere(const Vector3d& c, double r, double albedo) {
  Primitive p;
  p.kind = PrimitiveKind::sphere;
  p.center = c;
  p.radius = r;
  p.albedo = albedo;
  return p;
}

Primitive Primitive::box(const Vector3d& c, const Vector3d& half, double albedo) {
  Primitive p;
  p.kind = PrimitiveKind::box;
  p.center = c;
  p.half_extents = half;
  p.albedo = albedo;
  return p;
}

Primitive Primitive::cylinder(const Vector3d& c, const Vector3d& axis, double r, double half_height,
                              double albedo) {
  Primitive p;
  p.kind = PrimitiveKind::cylinder;
  p.center = c;
  p.axis = axis.norm() > 0.0 ? Vector3d(axis.normalized()) : axis;
  p.radius = r;
  p.half_height = half_height;
  p.albedo = albedo;
  return p;
}

void Primitive::validate() const {
  if (!center.allFinite()) throw Error(Errc::InvalidSceneSpec, "primitive centre is not finite");
  if (!(albedo >= 0.0 && albedo <= 1.0)) throw Error(Errc::InvalidSceneSpec, "albedo must lie in [0, 1]");
  switch (kind) {
    case PrimitiveKind::sphere:
      if (!(radius > 0.0)) throw Error(Errc::InvalidSceneSpec, "sphere radius must be positive");
      break;
    case PrimitiveKind::box:
      if (!(half_extents.minCoeff() > 0.0)) throw Error(Errc::InvalidSceneSpec, "box half extents must be positive");
      break;
    case PrimitiveKind::cylinder:
      if (!(radius > 0.0) || !(half_height > 0.0)) {
        throw Error(Errc::InvalidSceneSpec, "cylinder radius and half height must be positive");
      }
      if (std::abs(axis.norm() - 1.0) > 1e-9) throw Error(Errc::InvalidSceneSpec, "cylinder axis must be non-zero");
      break;
  }
}

bool Primitive::contains(const Vector3d& p) const {
  const Vector3d q = p - center;
  switch (kind) {
    case PrimitiveKind::sphere:
      return q.squaredNorm() <= radius * radius;
    case PrimitiveKind::box:
      return (q.cwiseAbs().array() <= half_extents.array()).all();
    case PrimitiveKind::cylinder: {
      const double along = q.dot(axis);
      return std::abs(along) <= half_height && (q - along * axis).squaredNorm() <= radius * radius;
    }
  }
  return false;
}

std::optional<Hit> Primitive::intersect(const Ray& ray) const {
  const Vector3d oc = ray.origin - center;
  const Vector3d& d = ray.direction;
  switch (kind) {
    case PrimitiveKind::sphere: {
      const double b = oc.dot(d);
      const double c = oc.squaredNorm() - radius * radius;
      const double disc = b * b - c;
      if (disc < 0.0) return std::nullopt;
      const double s = std::sqrt(disc);
      double t = -b - s;
      if (t <= kHitEpsilon) t = -b + s;
      if (t <= kHitEpsilon) return std::nullopt;
      return facing(t, (oc + t * d) / radius, ray, albedo);
    }
    case PrimitiveKind::box: {
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int near_axis = -1, far_axis = -1;
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
          if (std::abs(oc[a]) > half_extents[a]) return std::nullopt;
          continue;
        }
        double t0 = (-half_extents[a] - oc[a]) / d[a];
        double t1 = (half_extents[a] - oc[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > t_near) t_near = t0, near_axis = a;
        if (t1 < t_far) t_far = t1, far_axis = a;
      }
      if (t_near > t_far || t_far <= kHitEpsilon) return std::nullopt;
      const bool outside = t_near > kHitEpsilon;
      const double t = outside ? t_near : t_far;
      const int axis_hit = outside ? near_axis : far_axis;
      if (axis_hit < 0) return std::nullopt;
      Vector3d n = Vector3d::Zero();
      n[axis_hit] = 1.0;
      return facing(t, n, ray, albedo);
    }
    case PrimitiveKind::cylinder: {
      const double oa = oc.dot(axis), da = d.dot(axis);
      const Vector3d op = oc - oa * axis, dp = d - da * axis;
      std::optional<Hit> best;
      const double qa = dp.squaredNorm();
      if (qa > 0.0) {
        const double qb = op.dot(dp);
        const double qc = op.squaredNorm() - radius * radius;
        const double disc = qb * qb - qa * qc;
        if (disc >= 0.0) {
          const double s = std::sqrt(disc);
          for (double t : {(-qb - s) / qa, (-qb + s) / qa}) {
            if (t <= kHitEpsilon || std::abs(oa + t * da) > half_height) continue;
            best = nearest(best, facing(t, (op + t * dp) / radius, ray, albedo));
            break;
          }
        }
      }
      if (da != 0.0) {
        for (double cap : {-half_height, half_height}) {
          const double t = (cap - oa) / da;
          if (t <= kHitEpsilon || (op + t * dp).squaredNorm() > radius * radius) continue;
          best = nearest(best, facing(t, axis, ray, albedo));
        }
      }
      return best;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- mesh BVH

class MeshBvh {
 public:
  explicit MeshBvh(const TriMesh& mesh, const Vector3d& offset) {
    verts_ = mesh.vertices.colwise() + offset;
    tris_ = mesh.triangles;
    order_.resize(tris_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int32_t>(i);
    if (!tris_.empty()) {
      nodes_.resize(1);
      build(0, 0, static_cast<std::int32_t>(tris_.size()));
    }
  }

  std::optional<Hit> intersect(const Ray& ray, double albedo) const {
    if (nodes_.empty()) return std::nullopt;
    const Vector3d inv = ray.direction.cwiseInverse();
    double best_t = std::numeric_limits<double>::infinity();
    Vector3d best_n = Vector3d::Zero();
    std::int32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
      if (!slab(node, ray, inv, best_t)) continue;
      if (node.count > 0) {
        for (std::int32_t k = node.first; k < node.first + node.count; ++k) {
          triangle(tris_[static_cast<std::size_t>(order_[static_cast<std::size_t>(k)])], ray, best_t, best_n);
        }
      } else {
        stack[top++] = node.first;
        stack[top++] = node.first + 1;
      }
    }
    if (!std::isfinite(best_t)) return std::nullopt;
    return facing(best_t, best_n, ray, albedo);
  }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    std::int32_t first = 0;  ///< leaf: first triangle slot; inner: left child index
    std::int32_t count = 0;  ///< triangles in a leaf, 0 for inner nodes
  };

  Vector3d vertex(std::int32_t i) const { return verts_.col(i); }

  Vector3d centroid(std::int32_t t) const {
    const auto& tri = tris_[static_cast<std::size_t>(t)];
    return (vertex(tri[0]) + vertex(tri[1]) + vertex(tri[2])) / 3.0;
  }

  /// Fills nodes_[slot] for triangles order_[first, last).
  void build(std::size_t slot, std::int32_t first, std::int32_t last) {
    Eigen::AlignedBox3d box, cbox;
    for (std::int32_t k = first; k < last; ++k) {
      const auto t = order_[static_cast<std::size_t>(k)];
      for (auto v : tris_[static_cast<std::size_t>(t)]) box.extend(vertex(v));
      cbox.extend(centroid(t));
    }
    nodes_[slot].box = box;
    if (last - first <= 4) {
      nodes_[slot].first = first;
      nodes_[slot].count = last - first;
      return;
    }
    Eigen::Index axis = 0;
    cbox.sizes().maxCoeff(&axis);
    const std::int32_t mid = first + (last - first) / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last,
                     [&](std::int32_t a, std::int32_t b) {
                       const double ca = centroid(a)[axis], cb = centroid(b)[axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const std::size_t left = nodes_.size();
    nodes_.resize(left + 2);
    nodes_[slot].first = static_cast<std::int32_t>(left);
    build(left, first, mid);
    build(left + 1, mid, last);
  }

  static bool slab(const Node& node, const Ray& ray, const Vector3d& inv, double limit) {
    double t0 = 0.0, t1 = limit;
    for (int a = 0; a < 3; ++a) {
      double lo = (node.box.min()[a] - ray.origin[a]) * inv[a];
      double hi = (node.box.max()[a] - ray.origin[a]) * inv[a];
      if (lo > hi) std::swap(lo, hi);
      if (std::isnan(lo) || std::isnan(hi)) continue;
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      if (t0 > t1) return false;
    }
    return true;
  }

  void triangle(const std::array<std::int32_t, 3>& tri, const Ray& ray, double& best_t, Vector3d& best_n) const {
    const Vector3d a = vertex(tri[0]);
    const Vector3d e1 = vertex(tri[1]) - a, e2 = vertex(tri[2]) - a;
    const Vector3d pv = ray.direction.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return;
    const double inv_det = 1.0 / det;
    const Vector3d tv = ray.origin - a;
    const double u = tv.dot(pv) * inv_det;
    if (u < 0.0 || u > 1.0) return;
    const Vector3d qv = tv.cross(e1);
    const double v = ray.direction.dot(qv) * inv_det;
    if (v < 0.0 || u + v > 1.0) return;
    const double t = e2.dot(qv) * inv_det;
    if (t <= kHitEpsilon || t >= best_t) return;
    best_t = t;
    best_n = e1.cross(e2).normalized();
  }

  Eigen::Matrix3Xd verts_;
  std::vector<std::array<std::int32_t, 3>> tris_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------- scene

Scene::Scene() = default;
Scene::~Scene() = default;
Scene::Scene(Scene&&) noexcept = default;
Scene& Scene::operator=(Scene&&) noexcept = default;

Scene::Scene(const Scene& o) : primitives_(o.primitives_), mesh_(o.mesh_), mesh_albedo_(o.mesh_albedo_) {
  if (o.bvh_) bvh_ = std::make_unique<MeshBvh>(*o.bvh_);
}

Scene& Scene::operator=(const Scene& o) {
  if (this != &o) *this = Scene(o);
  return *this;
}

Scene Scene::from_primitives(std::vector<Primitive> primitives) {
  for (const auto& p : primitives) p.validate();
  Scene s;
  s.primitives_ = std::move(primitives);
  return s;
}

Scene Scene::from_mesh(const TriMesh& mesh, double albedo) {
  if (!(albedo >= 0.0 && albedo <= 1.0)) throw Error(Errc::InvalidSceneSpec, "albedo must lie in [0, 1]");
  Scene s;
  s.mesh_ = normalize_mesh(mesh);
  s.mesh_albedo_ = albedo;
  s.bvh_ = std::make_unique<MeshBvh>(s.mesh_, Vector3d::Constant(-0.5));
  return s;
}

bool Scene::empty() const { return primitives_.empty() && !bvh_; }

std::optional<Hit> Scene::intersect(const Ray& ray) const {
  if (bvh_) return bvh_->intersect(ray, mesh_albedo_);
  std::optional<Hit> best;
  for (const auto& p : primitives_) best = nearest(best, p.intersect(ray));
  return best;
}

VoxelGrid Scene::labels(Index resolution) const {
  if (resolution <= 0) throw Error(Errc::ResolutionZero, "label resolution must be positive");
  if (bvh_) return voxelize(mesh_, resolution, true);
  VoxelGrid g(resolution);
  if (primitives_.empty()) return g;
  const double r = static_cast<double>(resolution);
  for (Index z = 0; z < resolution; ++z)
    for (Index y = 0; y < resolution; ++y)
      for (Index x = 0; x < resolution; ++x) {
        const Vector3d p((x + 0.5) / r - 0.5, (y + 0.5) / r - 0.5, (z + 0.5) / r - 0.5);
        for (const auto& prim : primitives_) {
          if (prim.contains(p)) {
            g.set(x, y, z);
            break;
          }
        }
      }
  return g;
}

std::vector<Light> default_lights() {
  return {Light{Vector3d::UnitZ(), 0.45}, Light{-Vector3d::UnitZ(), 0.25},
          Light{Vector3d(1.0, 0.0, 0.5).normalized(), 0.3}};
}

Image render_frame(const Scene& scene, const Pose& pose, const CameraIntrinsics& cam,
                   const std::vector<Light>& lights, int threads) {
  cam.validate();
  Image img = Image::Ones(cam.height, cam.width);
  if (scene.empty()) return img;
  parallel_for(cam.height, threads, [&](Index v) {
    for (Index u = 0; u < cam.width; ++u) {
      const auto hit = scene.intersect(pixel_ray(pose, cam, u, v));
      if (!hit) continue;
      double shade = 0.0;
      for (const auto& l : lights) shade += l.intensity * std::max(0.0, hit->normal.dot(l.direction));
      img(v, u) = std::clamp(hit->albedo * shade, 0.0, 1.0);
    }
  });
  return img;
}

// ---------------------------------------------------------------- events

EventSynthesizer::EventSynthesizer(Index width, Index height, double fps, double contrast, double eps_log)
    : width_(width), height_(height), fps_(fps), contrast_(contrast), eps_log_(eps_log) {
  if (!(contrast > 0.0)) throw Error(Errc::ContrastNonPositive, "contrast threshold must be positive");
  if (!(fps > 0.0)) throw Error(Errc::InvalidSceneSpec, "fps must be positive");
  if (width <= 0 || height <= 0) throw Error(Errc::FrameDimMismatch, "frame dims must be positive");
}

void EventSynthesizer::push(const Image& frame) {
  if (frame.rows() != height_ || frame.cols() != width_) {
    throw Error(Errc::FrameDimMismatch, "frame " + std::to_string(frames_) + " is " + std::to_string(frame.cols()) +
                                            "x" + std::to_string(frame.rows()) + ", expected " +
                                            std::to_string(width_) + "x" + std::to_string(height_));
  }
  const Eigen::ArrayXd log_i = (frame.reshaped<Eigen::RowMajor>() + eps_log_).log();
  if (frames_ == 0) {
    base_ = log_i;
    prev_ = log_i;
    level_ = Eigen::ArrayX<std::int64_t>::Zero(log_i.size());
    frames_ = 1;
    return;
  }
  const double k = static_cast<double>(frames_ - 1);
  for (Index i = 0; i < log_i.size(); ++i) {
    const double la = prev_[i], lb = log_i[i];
    if (la == lb) continue;
    const auto x = static_cast<std::int32_t>(i % width_);
    const auto y = static_cast<std::int32_t>(i / width_);
    auto emit = [&](double crossing, std::int32_t polarity) {
      const double frac = (crossing - la) / (lb - la);
      events_.push_back(Event{x, y, (k + frac) / fps_, polarity});
    };
    if (lb > la) {
      while (base_[i] + static_cast<double>(level_[i] + 1) * contrast_ <= lb) {
        ++level_[i];
        emit(base_[i] + static_cast<double>(level_[i]) * contrast_, 1);
      }
    } else {
      while (base_[i] + static_cast<double>(level_[i] - 1) * contrast_ >= lb) {
        --level_[i];
        emit(base_[i] + static_cast<double>(level_[i]) * contrast_, -1);
      }
    }
  }
  prev_ = log_i;
  ++frames_;
}

EventStream EventSynthesizer::finish() const {
  std::vector<Event> sorted = events_;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return static_cast<Index>(a.y) * width_ + a.x < static_cast<Index>(b.y) * width_ + b.x;
  });
  return validate_stream(std::move(sorted), static_cast<std::int32_t>(width_), static_cast<std::int32_t>(height_),
                         static_cast<double>(frames_) / fps_);
}

EventStream video_to_events(const std::vector<Image>& frames, double fps, double contrast, double eps_log) {
  if (!(contrast > 0.0)) throw Error(Errc::ContrastNonPositive, "contrast threshold must be positive");
  if (frames.empty()) throw Error(Errc::FrameDimMismatch, "no frames");
  EventSynthesizer synth(frames.front().cols(), frames.front().rows(), fps, contrast, eps_log);
  for (const auto& f : frames) synth.push(f);
  return synth.finish();
}

GeneratedSample generate_sample(const Scene& scene, const SampleConfig& cfg, int threads) {
  cfg.trajectory.validate();
  cfg.camera.validate();
  const Index n = cfg.trajectory.frame_count();
  if (n < 1) throw Error(Errc::InvalidSceneSpec, "trajectory yields no frames");
  EventSynthesizer synth(cfg.camera.width, cfg.camera.height, cfg.trajectory.fps, cfg.contrast, cfg.eps_log);
  for (Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / cfg.trajectory.fps;
    synth.push(render_frame(scene, camera_pose(cfg.trajectory, t), cfg.camera, default_lights(), threads));
  }
  return GeneratedSample{synth.finish(), scene.labels(cfg.label_resolution), n};
}

// ---------------------------------------------------------------- procedural scenes

const std::vector<std::string>& procedural_categories() {
  static const std::vector<std::string> names{"sphere", "box", "cylinder", "composite"};
  return names;
}

namespace {

Vector3d random_unit(Rng& rng) {
  for (;;) {
    const Vector3d v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = v.norm();
    if (n > 0.1 && n <= 1.0) return v / n;
  }
}

/// Centre offset keeping an object of the given half extent inside [-0.5, 0.5].
Vector3d random_centre(const Vector3d& extent, Rng& rng) {
  Vector3d c;
  for (int a = 0; a < 3; ++a) {
    const double slack = std::max(0.0, 0.5 - extent[a]);
    c[a] = rng.uniform(-slack, slack);
  }
  return c;
}

Primitive random_primitive(PrimitiveKind kind, double scale, Rng& rng) {
  const double albedo = rng.uniform(0.5, 1.0);
  switch (kind) {
    case PrimitiveKind::sphere: {
      const double r = scale * rng.uniform(0.25, 0.45);
      return Primitive::sphere(random_centre(Vector3d::Constant(r), rng), r, albedo);
    }
    case PrimitiveKind::box: {
      const Vector3d half(scale * rng.uniform(0.15, 0.45), scale * rng.uniform(0.15, 0.45),
                          scale * rng.uniform(0.15, 0.45));
      return Primitive::box(random_centre(half, rng), half, albedo);
    }
    case PrimitiveKind::cylinder: {
      const Vector3d axis = random_unit(rng);
      const double r = scale * rng.uniform(0.15, 0.32);
      const double h = scale * rng.uniform(0.2, 0.45);
      Vector3d extent;
      for (int a = 0; a < 3; ++a) extent[a] = h * std::abs(axis[a]) + r * std::sqrt(std::max(0.0, 1.0 - axis[a] * axis[a]));
      return Primitive::cylinder(random_centre(extent, rng), axis, r, h, albedo);
    }
  }
  return Primitive{};
}

}  // namespace

Scene random_scene(const std::string& category, Rng& rng) {
  if (category == "sphere") return Scene::from_primitives({random_primitive(PrimitiveKind::sphere, 1.0, rng)});
  if (category == "box") return Scene::from_primitives({random_primitive(PrimitiveKind::box, 1.0, rng)});
  if (category == "cylinder") return Scene::from_primitives({random_primitive(PrimitiveKind::cylinder, 1.0, rng)});
  if (category == "composite") {
    const Index parts = 2 + static_cast<Index>(rng.below(2));
    std::vector<Primitive> prims;
    for (Index i = 0; i < parts; ++i) {
      prims.push_back(random_primitive(static_cast<PrimitiveKind>(rng.below(3)), 0.7, rng));
    }
    return Scene::from_primitives(std::move(prims));
  }
  throw Error(Errc::InvalidSceneSpec, "unknown procedural category '" + category + "'");
}

}  // namespace e2v
