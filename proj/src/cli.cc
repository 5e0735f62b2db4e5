// Copyright 2026 The BMP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bmp/cli.h"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "bmp/evaluation.h"
#include "bmp/image_io.h"
#include "bmp/loop_engine.h"
#include "bmp/process_backend.h"
#include "bmp/protocol.h"
#include "bmp/results_io.h"
#include "bmp/scene_gen.h"
#include "bmp/synthetic.h"

namespace bmp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSyntheticPrefix[] = "synthetic:";

void SetUpLogging(bool verbose) {
  auto logger = spdlog::get("bmp");
  if (!logger) {
    logger = spdlog::stderr_color_mt("bmp");
    spdlog::set_default_logger(logger);
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
}

bool IsSynthetic(const std::string& spec) {
  return spec.rfind(kSyntheticPrefix, 0) == 0;
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

bool IsImageFile(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// A directory (its images, sorted), a .txt list (one path per line,
// relative to the list) or a single image.
std::vector<fs::path> ListImages(const fs::path& input) {
  std::vector<fs::path> out;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && IsImageFile(e.path())) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
  } else if (input.extension() == ".txt") {
    std::ifstream in(input);
    if (!in) throw std::invalid_argument("cannot open " + input.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      fs::path p(line);
      out.push_back(p.is_absolute() ? p : input.parent_path() / p);
    }
  } else if (fs::is_regular_file(input)) {
    out.push_back(input);
  } else {
    throw std::invalid_argument("no such input: " + input.string());
  }
  if (out.empty()) throw std::invalid_argument("no images in " + input.string());
  return out;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string images;
  std::string gt;
  std::string out;
  std::string config_file;
  std::string detector;
  std::string pose;
  std::string segmenter;
  int iterations = 2;
  double alpha = 0.8;
  double tc = 0.3;
  int nmax = 6;
  std::string bbox_prompt;
  std::string pmc_gate;
  double det_score_min = 0.3;
  double v_det = 0.5;
  bool refine = false;
  bool rerun_pose = false;
  int workers = 1;
  int timeout_s = 120;
};

struct ImageJob {
  fs::path path;
  int64_t id = 0;
};

struct ImageOutcome {
  json results = json::array();
  json provenance;
  bool failed = false;
};

// Scene file for a synthetic role and image.
fs::path SceneFor(const std::string& spec, const fs::path& image) {
  const fs::path target = spec.substr(sizeof(kSyntheticPrefix) - 1);
  if (fs::is_directory(target)) {
    return target / (image.stem().string() + ".scene.json");
  }
  return target;
}

class BackendFactory {
 public:
  explicit BackendFactory(const RunArgs& args) : args_(args) {
    std::vector<std::string> commands;
    for (const std::string* s : {&args.detector, &args.pose, &args.segmenter}) {
      if (!IsSynthetic(*s)) commands.push_back(*s);
    }
    if (!commands.empty()) {
      // Synthetic roles are filled per image; placeholders keep the shared
      // process endpoints alive.
      const std::string& d = IsSynthetic(args.detector) ? commands[0] : args.detector;
      const std::string& p = IsSynthetic(args.pose) ? commands[0] : args.pose;
      const std::string& s =
          IsSynthetic(args.segmenter) ? commands[0] : args.segmenter;
      process_ = MakeProcessBackends(d, p, s,
                                     std::chrono::seconds(args.timeout_s));
    }
  }

  BackendSet ForImage(const fs::path& image, const std::string& skeleton) {
    BackendSet set = process_;
    std::map<fs::path, std::shared_ptr<SyntheticBackend>> synthetic;
    auto synth = [&](const std::string& spec) {
      const fs::path scene = SceneFor(spec, image);
      auto& slot = synthetic[scene];
      if (!slot) {
        slot = std::make_shared<SyntheticBackend>(LoadScene(scene), args_.v_det);
      }
      return slot;
    };
    if (IsSynthetic(args_.detector)) set.detector = synth(args_.detector);
    if (IsSynthetic(args_.pose)) set.pose = synth(args_.pose);
    if (IsSynthetic(args_.segmenter)) set.segmenter = synth(args_.segmenter);
    set.handshake_done = false;
    {
      // Process endpoints serve one request at a time anyway.
      std::lock_guard<std::mutex> lock(handshake_mu_);
      set.Handshake(skeleton);
    }
    return set;
  }

 private:
  const RunArgs& args_;
  BackendSet process_;
  std::mutex handshake_mu_;
};

BmpConfig EffectiveConfig(const RunArgs& a, const CLI::App& cmd) {
  BmpConfig config;
  if (!a.config_file.empty()) {
    config = BmpConfigFromJson(ReadJsonFile(a.config_file));
  }
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  if (given("--iterations")) config.max_iterations = a.iterations;
  if (given("--alpha")) config.alpha = a.alpha;
  if (given("--tc")) config.loop_policy.t_c = a.tc;
  if (given("--nmax")) {
    config.loop_policy.n_max = a.nmax;
    config.loop_policy.n_max_with_bbox = a.nmax;
  }
  if (given("--bbox-prompt")) ApplyBboxPromptSpec(a.bbox_prompt, config.loop_policy);
  if (given("--pmc-gate")) config.pmc_gate = a.pmc_gate == "on";
  if (given("--det-score-min")) config.det_score_min = a.det_score_min;
  if (given("--refine")) config.refine = a.refine;
  if (given("--rerun-pose")) config.rerun_pose_after_refine = a.rerun_pose;
  config.Validate();
  return config;
}

int DoRun(const RunArgs& args, const CLI::App& cmd) {
  BmpConfig config;
  std::vector<ImageJob> jobs;
  try {
    config = EffectiveConfig(args, cmd);
    std::map<std::string, int64_t> ids_by_name;
    if (!args.gt.empty()) {
      for (const ImageInfo& im : LoadAnnotations(args.gt).images) {
        ids_by_name[fs::path(im.file_name).filename().string()] = im.id;
      }
    }
    int64_t next = 1;
    for (const fs::path& p : ListImages(args.images)) {
      ImageJob job{p, next++};
      if (!args.gt.empty()) {
        auto it = ids_by_name.find(p.filename().string());
        if (it == ids_by_name.end()) {
          throw std::invalid_argument(p.filename().string() +
                                      " is not listed in " + args.gt);
        }
        job.id = it->second;
      }
      jobs.push_back(job);
    }
    std::sort(jobs.begin(), jobs.end(),
              [](const ImageJob& a, const ImageJob& b) { return a.id < b.id; });
    if (args.workers < 1) throw std::invalid_argument("--workers must be >= 1");
  } catch (const std::exception& e) {
    std::cerr << "bmp run: " << e.what() << "\n";
    return kExitUsage;
  }

  std::unique_ptr<BackendFactory> factory;
  try {
    factory = std::make_unique<BackendFactory>(args);
  } catch (const std::exception& e) {
    std::cerr << "bmp run: cannot start backends: " << e.what() << "\n";
    return kExitBackend;
  }

  std::vector<ImageOutcome> outcomes(jobs.size());
  std::atomic<size_t> next_job{0};
  std::mutex err_mu;
  std::string first_error;
  auto worker = [&]() {
    for (size_t i = next_job++; i < jobs.size(); i = next_job++) {
      const ImageJob& job = jobs[i];
      ImageOutcome& out = outcomes[i];
      const std::string name = job.path.filename().string();
      try {
        const Image image = ReadImage(job.path);
        BackendSet backends = factory->ForImage(job.path, config.skeleton);
        const LoopResult result = RunBmp(image, backends, config);
        out.results = LoopResultToCoco(result, job.id, config.skeleton);
        out.provenance = LoopResultProvenance(result, job.id, name);
        out.failed = result.error.has_value();
        if (out.failed) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (first_error.empty()) first_error = name + ": " + *result.error;
        }
      } catch (const std::exception& e) {
        out.failed = true;
        out.provenance = {{"image_id", job.id},
                          {"image", name},
                          {"error", e.what()}};
        std::lock_guard<std::mutex> lock(err_mu);
        if (first_error.empty()) first_error = name + ": " + e.what();
      }
    }
  };
  const int n_workers =
      std::min<int>(args.workers, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  json results = json::array();
  json images = json::array();
  bool any_failed = false;
  for (const ImageOutcome& o : outcomes) {
    for (const json& r : o.results) results.push_back(r);
    images.push_back(o.provenance);
    any_failed = any_failed || o.failed;
  }
  json provenance = {{"config", BmpConfigToJson(config)},
                     {"backends",
                      {{"detector", args.detector},
                       {"pose", args.pose},
                       {"segmenter", args.segmenter},
                       {"v_det", args.v_det}}},
                     {"images", std::move(images)}};
  try {
    fs::create_directories(args.out);
    WriteFileAtomically(fs::path(args.out) / "results.json",
                        results.dump() + "\n");
    WriteFileAtomically(fs::path(args.out) / "provenance.json",
                        provenance.dump(1) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "bmp run: " << e.what() << "\n";
    return kExitUsage;
  }
  if (any_failed) {
    std::cerr << "bmp run: " << first_error << "\n";
    return kExitBackend;
  }
  std::cout << "processed " << jobs.size() << " image(s), "
            << results.size() << " instance(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string gt;
  std::string results;
  std::string baseline;
  std::string task = "all";
  std::string out;
  std::string skeleton = "coco17";
  int max_dets = 100;
  bool stratify = false;
};

std::string FormatSummary(EvalTask task, const ApSummary& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%-9s AP %.4f  AP50 %.4f  AP75 %.4f  AR %.4f  (%lld GT, %lld "
                "results)\n",
                std::string(ToString(task)).c_str(), s.ap, s.ap50, s.ap75,
                s.ar, static_cast<long long>(s.num_gt),
                static_cast<long long>(s.num_dt));
  return buf;
}

int DoEval(const EvalArgs& args) {
  try {
    const Dataset gt = LoadAnnotations(args.gt);
    const std::vector<ResultAnnotation> results = LoadResults(args.results, gt);
    EvalParams params = EvalParams::Default();
    params.max_dets = args.max_dets;
    params.skeleton = args.skeleton;
    std::vector<EvalTask> tasks;
    if (args.task == "all") {
      tasks = {EvalTask::kBbox, EvalTask::kSegm, EvalTask::kKeypoints};
    } else {
      tasks = {ParseEvalTask(args.task)};
    }
    json report = {{"max_dets", params.max_dets}};
    std::string text;
    for (EvalTask t : tasks) {
      const ApSummary s = AveragePrecision(gt, results, t, params);
      report[std::string(ToString(t))] = SummaryToJson(s, true);
      text += FormatSummary(t, s);
    }
    if (args.stratify) {
      const StratifiedReport strat =
          StratifiedBboxAp(gt, results, DefaultMaxIouBins(), params);
      report["stratified_bbox"] = StratifiedToJson(strat);
      if (!args.baseline.empty()) {
        const StratifiedReport base = StratifiedBboxAp(
            gt, LoadResults(args.baseline, gt), DefaultMaxIouBins(), params);
        report["stratified_bbox_baseline"] = StratifiedToJson(base);
        text += "\n" + FormatStratifiedTable(strat, &base);
      } else {
        text += "\n" + FormatStratifiedTable(strat);
      }
    }
    std::cout << text;
    if (!args.out.empty()) {
      WriteFileAtomically(args.out, report.dump(1) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "bmp eval: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  uint64_t seed = 1;
  int count = 100;
  double occlusion = -1;
  bool canonical = false;
  SceneGenParams params;
};

int DoSynth(SynthArgs args, const CLI::App& cmd) {
  try {
    if (cmd.count("--occlusion")) {
      args.params.occlusion_min = args.occlusion;
      args.params.occlusion_max = args.occlusion;
    }
    args.params.Validate();
    std::vector<Scene> scenes;
    if (args.canonical) {
      scenes.push_back(CanonicalOcclusionScene(
          cmd.count("--occlusion") ? args.occlusion : 0.7));
    } else {
      scenes = GenerateCorpus(args.seed, args.count, args.params);
    }
    const fs::path out(args.out);
    fs::create_directories(out / "images");
    fs::create_directories(out / "scenes");
    std::vector<std::string> names;
    for (size_t i = 0; i < scenes.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "%06zu", i + 1);
      names.push_back(std::string(stem) + ".png");
      WriteImage(out / "images" / names.back(), scenes[i].Render());
      SaveScene(out / "scenes" / (std::string(stem) + ".scene.json"),
                scenes[i]);
    }
    WriteFileAtomically(out / "annotations.json",
                        ScenesToCocoGt(scenes, names).dump() + "\n");
    std::cout << "wrote " << scenes.size() << " scene(s) to " << out.string()
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "bmp synth: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// backend

int DoBackend(const std::string& scene_path, double v_det, bool no_masks) {
  std::unique_ptr<SyntheticBackend> backend;
  try {
    backend = std::make_unique<SyntheticBackend>(LoadScene(scene_path), v_det,
                                                 !no_masks);
  } catch (const std::exception& e) {
    std::cerr << "bmp backend: " << e.what() << "\n";
    return kExitUsage;
  }
  protocol::BackendServer server(backend->Handshake(), backend.get(),
                                 backend.get(), backend.get());
  server.Serve(STDIN_FILENO, STDOUT_FILENO);
  return kExitOk;
}

}  // namespace

int RunCli(int argc, const char* const* argv) {
  CLI::App app{"Detect, pose, segment and mask out, repeatedly."};
  app.name("bmp");
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  // run
  RunArgs run;
  CLI::App* run_cmd = app.add_subcommand("run", "Run the loop over images");
  run_cmd->add_option("--images", run.images,
                      "Image directory, .txt list or single image")
      ->required();
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--gt", run.gt,
                      "COCO annotations giving image ids by file name");
  run_cmd->add_option("--config", run.config_file,
                      "JSON config; flags override it");
  run_cmd->add_option("--detector", run.detector,
                      "Command line or synthetic:<scene file or dir>")
      ->required();
  run_cmd->add_option("--pose", run.pose, "Same forms as --detector")
      ->required();
  run_cmd->add_option("--segmenter", run.segmenter, "Same forms as --detector")
      ->required();
  run_cmd->add_option("--iterations", run.iterations, "Loop iterations")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--alpha", run.alpha, "Pose conditioning blend")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--tc", run.tc, "Keypoint confidence for prompts")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--nmax", run.nmax, "Positive prompts per instance")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--bbox-prompt", run.bbox_prompt,
                      "never, always or by-max-iou:<theta>");
  run_cmd->add_option("--pmc-gate", run.pmc_gate, "on or off")
      ->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_option("--det-score-min", run.det_score_min,
                      "Detector score cut")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_flag("--refine", run.refine, "Refinement pass after the loop");
  run_cmd->add_flag("--rerun-pose", run.rerun_pose,
                    "Re-run pose on refined masks");
  run_cmd->add_option("--v-det", run.v_det,
                      "Visibility cut of the synthetic detector")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--workers", run.workers, "Images processed in parallel");
  run_cmd->add_option("--timeout", run.timeout_s,
                      "Seconds to wait for a backend reply")
      ->check(CLI::PositiveNumber);

  // eval
  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "COCO AP of a results file");
  eval_cmd->add_option("--gt", ev.gt, "COCO annotations")->required();
  eval_cmd->add_option("--results", ev.results, "COCO results")->required();
  eval_cmd->add_option("--task", ev.task, "bbox, segm, keypoints or all")
      ->check(CLI::IsMember({"bbox", "segm", "keypoints", "all"}));
  eval_cmd->add_flag("--stratify-max-iou", ev.stratify,
                     "Box AP per max-IoU bin");
  eval_cmd->add_option("--baseline", ev.baseline,
                       "Results to show deltas against (with stratification)");
  eval_cmd->add_option("--out", ev.out, "JSON report path");
  eval_cmd->add_option("--max-dets", ev.max_dets, "Detections per image")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--skeleton", ev.skeleton, "Keypoint layout");

  // synth
  SynthArgs syn;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Generate synthetic scenes and COCO GT");
  synth_cmd->add_option("--out", syn.out, "Output directory")->required();
  synth_cmd->add_option("--seed", syn.seed, "Generator seed");
  synth_cmd->add_option("--count", syn.count, "Number of scenes")
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--occlusion", syn.occlusion,
                        "Fixed occlusion of the rear person")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--occlusion-min", syn.params.occlusion_min)
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--occlusion-max", syn.params.occlusion_max)
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--min-persons", syn.params.min_persons);
  synth_cmd->add_option("--max-persons", syn.params.max_persons);
  synth_cmd->add_option("--width", syn.params.width);
  synth_cmd->add_option("--height", syn.params.height);
  synth_cmd->add_flag("--canonical", syn.canonical,
                      "Emit the canonical two-person scene only");

  // backend
  std::string scene_path;
  double v_det = 0.5;
  bool no_masks = false;
  CLI::App* backend_cmd = app.add_subcommand(
      "backend", "Serve the synthetic backend over stdin/stdout");
  backend_cmd->add_option("--scene", scene_path, "Scene file")->required();
  backend_cmd->add_option("--v-det", v_det, "Visibility cut")
      ->check(CLI::Range(0.0, 1.0));
  backend_cmd->add_flag("--no-masks", no_masks,
                        "Detector reports boxes only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  SetUpLogging(verbose);
  if (*run_cmd) return DoRun(run, *run_cmd);
  if (*eval_cmd) return DoEval(ev);
  if (*synth_cmd) return DoSynth(syn, *synth_cmd);
  if (*backend_cmd) return DoBackend(scene_path, v_det, no_masks);
  return kExitUsage;
}

int RunCli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  return RunCli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace bmp
