// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "avsal/evaluation.hpp"
#include "avsal/ingest.hpp"
#include "avsal/optim.hpp"

namespace avsal {
namespace {

constexpr const char* kStageNames[] = {"pretrain_visual", "pretrain_face", "pretrain_audio_joint", "joint"};

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

void require_file(const std::string& path, const std::string& what, Stage stage) {
  if (path.empty()) {
    throw ConfigError("stage " + to_string(stage) + " requires " + what + " (no path configured)");
  }
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("stage " + to_string(stage) + " requires " + what + ": " + path + " does not exist");
  }
}

// Splits [0, n) into shuffled batches, reshuffling every epoch.
class BatchSampler {
 public:
  BatchSampler(size_t n, size_t batch, uint64_t seed) : order_(n), batch_(std::min(batch, n)), rng_(seed) {
    std::iota(order_.begin(), order_.end(), size_t{0});
    reshuffle();
  }
  std::vector<size_t> next() {
    std::vector<size_t> out;
    while (out.size() < batch_) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    // Fisher-Yates with explicit draws so the order does not depend on the
    // standard library's shuffle.
    for (size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
    pos_ = 0;
  }
  std::vector<size_t> order_;
  size_t batch_;
  size_t pos_ = 0;
  Rng rng_;
};

double window_mean(const std::vector<double>& v, size_t end, size_t width) {
  double s = 0.0;
  for (size_t i = end - width; i < end; ++i) s += v[i];
  return s / static_cast<double>(width);
}

}  // namespace

std::string to_string(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

Stage parse_stage(std::string_view name) {
  for (int i = 0; i < 4; ++i)
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  throw ConfigError("unknown stage '" + std::string(name) +
                    "' (expected pretrain_visual, pretrain_face, pretrain_audio_joint or joint)");
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq)), v = trim(content.substr(eq + 1));
    if (key == "stage") c.stage = parse_stage(v);
    else if (key == "lr") c.lr = parse_number<double>(key, v);
    else if (key == "beta1") c.beta1 = parse_number<double>(key, v);
    else if (key == "beta2") c.beta2 = parse_number<double>(key, v);
    else if (key == "eps") c.eps = parse_number<double>(key, v);
    else if (key == "batch_size") c.batch_size = parse_number<int64_t>(key, v);
    else if (key == "max_steps") c.max_steps = parse_number<int64_t>(key, v);
    else if (key == "seed") c.seed = parse_number<uint64_t>(key, v);
    else if (key == "resolution") c.resolution = parse_number<int64_t>(key, v);
    else if (key == "width_divisor") c.width_divisor = parse_number<int64_t>(key, v);
    else if (key == "use_audio") c.use_audio = parse_bool(key, v);
    else if (key == "use_face") c.use_face = parse_bool(key, v);
    else if (key == "data_dir") c.data_dir = v;
    else if (key == "out_dir") c.out_dir = v;
    else if (key == "visual_checkpoint") c.visual_checkpoint = v;
    else if (key == "face_checkpoint") c.face_checkpoint = v;
    else if (key == "audio_checkpoint") c.audio_checkpoint = v;
    else if (key == "image_asset") c.image_asset = v;
    else if (key == "flow_asset") c.flow_asset = v;
    else if (key == "require_pretrained") c.require_pretrained = parse_bool(key, v);
    else if (key == "lr_decay_every") c.lr_decay_every = parse_number<int64_t>(key, v);
    else if (key == "lr_decay_factor") c.lr_decay_factor = parse_number<double>(key, v);
    else if (key == "plateau_window") c.plateau_window = parse_number<int64_t>(key, v);
    else if (key == "plateau_tolerance") c.plateau_tolerance = parse_number<double>(key, v);
    else if (key == "stop_below") c.stop_below = parse_number<double>(key, v);
    else if (key == "stop_window") c.stop_window = parse_number<int64_t>(key, v);
    else if (key == "min_steps") c.min_steps = parse_number<int64_t>(key, v);
    else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "stage = " << to_string(stage) << "\nlr = " << lr << "\nbeta1 = " << beta1 << "\nbeta2 = " << beta2
     << "\neps = " << eps << "\nbatch_size = " << batch_size << "\nmax_steps = " << max_steps << "\nseed = " << seed
     << "\nresolution = " << resolution << "\nwidth_divisor = " << width_divisor
     << "\nuse_audio = " << (use_audio ? "true" : "false") << "\nuse_face = " << (use_face ? "true" : "false")
     << "\ndata_dir = " << data_dir << "\nout_dir = " << out_dir << "\nvisual_checkpoint = " << visual_checkpoint
     << "\nface_checkpoint = " << face_checkpoint << "\naudio_checkpoint = " << audio_checkpoint
     << "\nimage_asset = " << image_asset << "\nflow_asset = " << flow_asset
     << "\nrequire_pretrained = " << (require_pretrained ? "true" : "false") << "\nlr_decay_every = " << lr_decay_every
     << "\nlr_decay_factor = " << lr_decay_factor << "\nplateau_window = " << plateau_window
     << "\nplateau_tolerance = " << plateau_tolerance << "\nstop_below = " << stop_below
     << "\nstop_window = " << stop_window << "\nmin_steps = " << min_steps << "\n";
  return os.str();
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be nonnegative");
  if (resolution < 16 || resolution % 16 != 0) throw ConfigError("resolution must be a positive multiple of 16");
  if (width_divisor < 1) throw ConfigError("width_divisor must be at least 1");
  if (lr_decay_every < 0 || !(lr_decay_factor > 0.0)) throw ConfigError("invalid learning-rate decay");
  if (plateau_window < 0 || stop_window < 1 || min_steps < 0) throw ConfigError("invalid stopping window");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.resolution = resolution;
  m.width_divisor = width_divisor;
  m.use_audio = use_audio;
  m.use_face = use_face;
  return m;
}

Var kl_loss(const Var& s, const Tensor& g) {
  const int64_t frames = s.dim(0);
  const Shape& ss = s.shape();
  const bool planes_match = g.rank() == 3 && ((ss.size() == 4 && ss[1] == 1 && ss[2] == g.dim(1) && ss[3] == g.dim(2)) ||
                                              (ss.size() == 3 && ss[1] == g.dim(1) && ss[2] == g.dim(2)));
  if (!planes_match || g.dim(0) != frames) {
    throw ShapeError("kl_loss: prediction " + shape_to_string(s.shape()) + " vs target " +
                     shape_to_string(g.shape()));
  }
  const int64_t plane = g.numel() / frames;
  double total = 0.0;
  for (int64_t t = 0; t < frames; ++t) {
    total += kl_divergence(std::span<const double>(g.data() + t * plane, static_cast<size_t>(plane)),
                           std::span<const double>(s.value().data() + t * plane, static_cast<size_t>(plane)));
  }
  Tensor value({1}, total / static_cast<double>(frames));
  return make_op_result(std::move(value), {s}, [g, frames, plane](Node& self) {
    Tensor& gs = self.inputs[0]->grad_buffer();
    const double scale = self.grad[0] / static_cast<double>(frames);
    std::vector<double> buf(static_cast<size_t>(plane));
    for (int64_t t = 0; t < frames; ++t) {
      kl_divergence_grad(std::span<const double>(g.data() + t * plane, static_cast<size_t>(plane)),
                         std::span<const double>(self.inputs[0]->value.data() + t * plane, static_cast<size_t>(plane)),
                         buf);
      double* dst = gs.data() + t * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] += scale * buf[static_cast<size_t>(i)];
    }
  });
}

Tensor stack_densities(const ClipSample& clip) {
  const int64_t t_len = static_cast<int64_t>(clip.gt_density.size());
  if (t_len == 0) throw ValidationError("clip has no density maps");
  const int64_t h = clip.gt_density[0].height(), w = clip.gt_density[0].width();
  Tensor out({t_len, h, w});
  for (int64_t t = 0; t < t_len; ++t) {
    const Tensor& m = clip.gt_density[static_cast<size_t>(t)].values();
    std::copy(m.values().begin(), m.values().end(), out.data() + t * h * w);
  }
  return out;
}

FaceTargets face_targets(const ClipSample& clip, const std::vector<int>& face_ids) {
  const int64_t t_len = clip.length(), faces = static_cast<int64_t>(face_ids.size());
  std::vector<FaceTrack> ordered;
  for (int id : face_ids)
    for (const FaceTrack& track : clip.face_tracks)
      if (track.face_id == id) ordered.push_back(track);
  FaceTargets out{Tensor({t_len, faces}, 0.0), std::vector<bool>(static_cast<size_t>(t_len), false)};
  for (int64_t t = 0; t < t_len; ++t) {
    const FaceWeightTarget target = gt_face_weights(clip.gt_fixations[static_cast<size_t>(t)], ordered, t);
    out.supervised[static_cast<size_t>(t)] = target.supervised;
    for (int64_t n = 0; n < faces; ++n) out.weights[t * faces + n] = target.weights[static_cast<size_t>(n)];
  }
  return out;
}

bool trains_parameter(Stage stage, const std::string& name) {
  switch (stage) {
    case Stage::pretrain_visual:
      return starts_with(name, "visual.") || starts_with(name, SaliencyModel::kPretrainHeadPrefix);
    case Stage::pretrain_face:
      return starts_with(name, "face.");
    case Stage::pretrain_audio_joint:
      return starts_with(name, "visual.") || starts_with(name, "audio.") || starts_with(name, "fusion.");
    case Stage::joint:
      return !starts_with(name, SaliencyModel::kPretrainHeadPrefix);
  }
  return false;
}

bool saves_parameter(Stage stage, const std::string& name) { return trains_parameter(stage, name); }

TrainResult train_stage(const TrainConfig& config, std::span<const ClipSample> clips, SaliencyModel* model_out) {
  config.validate();
  switch (config.stage) {
    case Stage::pretrain_audio_joint:
      require_file(config.visual_checkpoint, "a pretrain_visual checkpoint (visual_checkpoint)", config.stage);
      break;
    case Stage::joint:
      require_file(config.face_checkpoint, "a pretrain_face checkpoint (face_checkpoint)", config.stage);
      require_file(config.audio_checkpoint, "a pretrain_audio_joint checkpoint (audio_checkpoint)", config.stage);
      break;
    default:
      break;
  }
  if (clips.empty()) throw ValidationError("training set is empty");
  for (size_t i = 0; i < clips.size(); ++i) {
    const auto violations = validate_clip(clips[i]);
    if (!violations.empty()) {
      throw ValidationError("clip " + std::to_string(i) + " (" + clips[i].video_id + ") is invalid: " +
                            to_string(violations.front()));
    }
    if (clips[i].resolution() != config.resolution) {
      throw ValidationError("clip " + std::to_string(i) + " has resolution " + std::to_string(clips[i].resolution()) +
                            ", config expects " + std::to_string(config.resolution));
    }
  }

  SaliencyModel model(config.model_config(), config.seed);
  auto apply_asset = [&](const std::string& path, const char* what,
                         const std::vector<std::pair<std::string, std::string>>& renames) {
    if (path.empty()) {
      if (config.require_pretrained) throw ConfigError(std::string("require_pretrained is set but no ") + what + " is configured");
      return;
    }
    if (!std::filesystem::is_regular_file(path)) {
      if (config.require_pretrained) throw ConfigError(std::string(what) + " not found: " + path);
      std::cerr << "warning: " << what << " " << path << " not found, using random initialization\n";
      return;
    }
    load_asset(model, path, renames);
  };
  if (config.stage == Stage::pretrain_visual || config.stage == Stage::pretrain_face) {
    std::vector<std::pair<std::string, std::string>> image_renames;
    for (int b = 1; b <= 5; ++b)
      for (int i = 1; i <= 3; ++i) {
        const std::string conv = "conv" + std::to_string(b) + "_" + std::to_string(i) + ".";
        if (b <= 4) image_renames.emplace_back(conv, "visual.rgb." + conv);
        image_renames.emplace_back(conv, "face.cnn." + conv);
      }
    apply_asset(config.image_asset, "image-classification asset", image_renames);
    if (config.stage == Stage::pretrain_visual) {
      apply_asset(config.flow_asset, "flow asset", {{"", "visual.flow."}});
    }
  }
  if (config.stage == Stage::pretrain_audio_joint) {
    load_into(model, read_checkpoint(config.visual_checkpoint), {"visual."});
  }
  if (config.stage == Stage::joint) {
    load_into(model, read_checkpoint(config.face_checkpoint), {"face."});
    load_into(model, read_checkpoint(config.audio_checkpoint), {"visual.", "audio.", "fusion."});
  }

  std::vector<std::pair<std::string, Var>> trained;
  for (const auto& e : model.parameters().entries())
    if (trains_parameter(config.stage, e.first)) trained.push_back(e);
  Adam adam(trained, AdamOptions{config.lr, config.beta1, config.beta2, config.eps});

  // Inputs are cached when the set is small; large sets are prepared per step.
  const bool cache = clips.size() <= 16;
  std::vector<ModelInputs> cached;
  std::vector<Tensor> densities;
  std::vector<FaceTargets> targets;
  if (cache) {
    for (const ClipSample& c : clips) cached.push_back(prepare_inputs(c, model.config()));
  }
  for (const ClipSample& c : clips) densities.push_back(stack_densities(c));
  if (config.stage == Stage::pretrain_face) {
    for (size_t i = 0; i < clips.size(); ++i) {
      const ModelInputs in = cache ? ModelInputs{} : prepare_inputs(clips[i], model.config());
      targets.push_back(face_targets(clips[i], cache ? cached[i].face_ids : in.face_ids));
    }
  }

  const PathMask paths = config.stage == Stage::pretrain_audio_joint
                             ? PathMask{config.use_audio, false}
                             : PathMask{config.use_audio, config.use_face};
  BatchSampler sampler(clips.size(), static_cast<size_t>(config.batch_size), config.seed ^ 0x5eedba7c4ULL);
  TrainResult result;
  result.stop_reason = "max_steps";
  for (int64_t step = 0; step < config.max_steps; ++step) {
    if (config.lr_decay_every > 0 && step > 0 && step % config.lr_decay_every == 0) {
      adam.set_lr(adam.lr() * config.lr_decay_factor);
    }
    model.parameters().zero_grad();
    const std::vector<size_t> batch = sampler.next();
    double batch_loss = 0.0;
    int64_t contributing = 0;
    std::vector<Var> losses;
    for (size_t idx : batch) {
      const ModelInputs local = cache ? ModelInputs{} : prepare_inputs(clips[idx], model.config());
      const ModelInputs& in = cache ? cached[idx] : local;
      Var loss;
      switch (config.stage) {
        case Stage::pretrain_visual:
          loss = kl_loss(model.visual_pretrain_forward(in), densities[idx]);
          break;
        case Stage::pretrain_face: {
          if (in.faces.faces == 0) continue;
          const FaceOutput out = model.face().forward(in.faces);
          FaceWeightLoss fl = face_weight_loss(out.weights, targets[idx].weights, targets[idx].supervised,
                                               in.faces.present);
          if (fl.unsupervised) continue;
          loss = fl.loss;
          break;
        }
        case Stage::pretrain_audio_joint:
        case Stage::joint:
          loss = kl_loss(model.forward(in, paths).saliency, densities[idx]);
          break;
      }
      losses.push_back(loss);
      ++contributing;
    }
    if (contributing == 0) {
      ++result.skipped_unsupervised;
      continue;
    }
    for (const Var& loss : losses) {
      batch_loss += loss.value()[0];
      backward(ops::scale(loss, 1.0 / static_cast<double>(contributing)));
    }
    adam.step();
    result.losses.push_back(batch_loss / static_cast<double>(contributing));
    ++result.steps;

    const size_t n = result.losses.size();
    if (static_cast<int64_t>(n) < config.min_steps) continue;
    const size_t sw = static_cast<size_t>(config.stop_window);
    if (config.stop_below > 0.0 && n >= sw && window_mean(result.losses, n, sw) < config.stop_below) {
      result.stop_reason = "target";
      break;
    }
    const size_t pw = static_cast<size_t>(config.plateau_window);
    if (pw > 0 && n >= 2 * pw) {
      const double before = window_mean(result.losses, n - pw, pw), after = window_mean(result.losses, n, pw);
      if (before - after < config.plateau_tolerance * std::abs(before)) {
        result.stop_reason = "plateau";
        break;
      }
    }
  }

  if (!config.out_dir.empty()) {
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    result.checkpoint = dir / (to_string(config.stage) + ".ckpt");
    write_checkpoint(result.checkpoint, make_checkpoint(model, to_string(config.stage), [&](const std::string& name) {
                       return saves_parameter(config.stage, name);
                     }));
    result.loss_curve = dir / (to_string(config.stage) + "_loss.csv");
    std::ofstream csv(result.loss_curve);
    csv << "step,loss\n" << std::setprecision(17);
    for (size_t i = 0; i < result.losses.size(); ++i) csv << i << ',' << result.losses[i] << '\n';
  }
  if (model_out != nullptr) *model_out = std::move(model);
  return result;
}

Prediction predict(const SaliencyModel& model, const ClipSample& clip) {
  NoGradGuard no_grad;
  const ModelInputs in = prepare_inputs(clip, model.config());
  const ModelOutputs out = model.forward(in);
  const int64_t t_len = in.length(), r = model.config().resolution, faces = in.faces.faces;
  Prediction p;
  p.face_ids = in.face_ids;
  p.face_weights = out.face_weights.value();
  for (int64_t t = 0; t < t_len; ++t) {
    Tensor m({r, r});
    std::copy(out.saliency.value().data() + t * r * r, out.saliency.value().data() + (t + 1) * r * r, m.data());
    p.maps.emplace_back(std::move(m), MapForm::distribution);
    bool any = false;
    for (int64_t n = 0; n < faces; ++n) any = any || in.faces.present[t * faces + n] != 0.0;
    p.has_faces.push_back(any && model.config().use_face);
  }
  return p;
}

Prediction predict(const std::filesystem::path& checkpoint, const ClipSample& clip) {
  return predict(load_model(checkpoint), clip);
}

}  // namespace avsal
