// Command-line front end for the whole pipeline: world generation, teacher
// training, concept extraction, SCG building, distillation, explanations and
// the three experiment families.
//
// Exit codes: 0 success, 1 usage or runtime error, 2 experiment threshold
// failure.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vrx/harness/harness.hpp"
#include "vrx/tensor/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<vrx::vce::ConceptBank> load_banks_dir(const std::string& dir) {
  std::vector<vrx::vce::ConceptBank> banks;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json" &&
        entry.path().filename().string().rfind("bank_", 0) == 0)
      files.push_back(entry.path());
  if (files.empty()) throw vrx::Error("no bank_*.json files in " + dir);
  std::sort(files.begin(), files.end());
  for (const auto& f : files) banks.push_back(vrx::vce::load_bank(f.string()));
  std::sort(banks.begin(), banks.end(),
            [](const auto& a, const auto& b) { return a.class_id < b.class_id; });
  return banks;
}

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path().string());
  std::ofstream out(path);
  if (!out) throw vrx::Error("cannot open " + path + " for writing");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vrx: structural concept graph explanations for image classifiers"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string config_path, out_dir, format = "json";
  app.add_option("--seed", seed, "master random seed")->capture_default_str();
  app.add_option("--config", config_path, "JSON config file overriding defaults");
  app.add_option("--out", out_dir, "output directory (also VRX_OUT_DIR)");
  app.add_option("--format", format, "output format: json|csv|dot|svg")->capture_default_str();

  // gen-world
  auto* gen = app.add_subcommand("gen-world", "generate a synthetic dataset");
  std::string preset = "default";
  std::size_t n_per_class = 50;
  gen->add_option("--preset", preset, "default|pose-bias|pose-bias-unbiased")
      ->capture_default_str();
  gen->add_option("--n-per-class", n_per_class, "images per class")->capture_default_str();

  // train-teacher
  auto* tt = app.add_subcommand("train-teacher", "train the classifier on a dataset directory");
  std::string data_dir;
  std::size_t tt_epochs = 15;
  double tt_lr = 1e-3;
  tt->add_option("--data", data_dir, "dataset directory")->required();
  tt->add_option("--epochs", tt_epochs)->capture_default_str();
  tt->add_option("--lr", tt_lr)->capture_default_str();

  // extract-concepts
  auto* ec = app.add_subcommand("extract-concepts", "discover per-class concept banks");
  std::string ec_data, ec_teacher;
  ec->add_option("--data", ec_data, "dataset directory")->required();
  ec->add_option("--teacher", ec_teacher, "teacher checkpoint directory")->required();

  // build-scg
  auto* bs = app.add_subcommand("build-scg", "build hypothesis SCGs for one image");
  std::string bs_image, bs_teacher, bs_banks;
  bs->add_option("--image", bs_image, "image tensor container")->required();
  bs->add_option("--teacher", bs_teacher)->required();
  bs->add_option("--banks", bs_banks, "directory of bank_*.json")->required();

  // distill
  auto* di = app.add_subcommand("distill", "distill the graph student from the teacher");
  std::string di_data, di_teacher, di_banks;
  std::size_t di_epochs = 0;
  di->add_option("--data", di_data)->required();
  di->add_option("--teacher", di_teacher)->required();
  di->add_option("--banks", di_banks)->required();
  di->add_option("--epochs", di_epochs, "override the schedule length");

  // explain
  auto* ex = app.add_subcommand("explain", "why / why-not explanation for one image");
  std::string ex_image, ex_model, ex_teacher, ex_banks, ex_out;
  ex->add_option("--image", ex_image)->required();
  ex->add_option("--model", ex_model, "student checkpoint directory")->required();
  ex->add_option("--teacher", ex_teacher)->required();
  ex->add_option("--banks", ex_banks)->required();
  ex->add_option("--out", ex_out, "output file (defaults to stdout)");

  // export-edge-weights
  auto* ew = app.add_subcommand("export-edge-weights", "dump a class's aggregation matrix");
  std::string ew_model;
  std::size_t ew_class = 0;
  ew->add_option("--model", ew_model)->required();
  ew->add_option("--class", ew_class, "class id")->required();

  // experiments
  auto* xl = app.add_subcommand("exp-logic", "guided-correction consistency experiment");
  auto* xs = app.add_subcommand("exp-sensitivity", "visual/structural sensitivity experiment");
  auto* xb = app.add_subcommand("exp-bias", "pose-bias diagnosis experiment");

  // report
  auto* rp = app.add_subcommand("report", "reprint a saved experiment report");
  std::string rp_in;
  rp->add_option("--in", rp_in, "report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    vrx::harness::HarnessConfig cfg;
    if (!config_path.empty()) cfg = vrx::harness::HarnessConfig::load(config_path);
    if (app.count("--seed")) cfg.seed = seed;
    if (const char* env = std::getenv("VRX_OUT_DIR")) cfg.out_dir = env;
    if (app.count("--out")) cfg.out_dir = out_dir;
    fs::create_directories(cfg.out_dir);

    if (*gen) {
      cfg.world_preset = preset;
      vrx::world::WorldSpec spec = cfg.resolve_world();
      auto ds = vrx::world::generate_dataset(spec, n_per_class, cfg.seed);
      vrx::world::export_dataset(ds, cfg.out_dir);
      std::cout << "wrote " << ds.images.size() << " images to " << cfg.out_dir << "\n";
      return 0;
    }
    if (*tt) {
      auto ds = vrx::world::import_dataset(data_dir);
      auto result = vrx::world::train_teacher(ds, tt_epochs, tt_lr, cfg.seed);
      result.model.save(cfg.out_dir);
      std::cout << "teacher: train acc " << result.train_accuracy << ", val acc "
                << result.val_accuracy << " -> " << cfg.out_dir << "\n";
      return 0;
    }
    if (*ec) {
      auto ds = vrx::world::import_dataset(ec_data);
      auto teacher = vrx::world::Teacher::load(ec_teacher);
      const auto fill = ds.mean_pixel();
      for (std::size_t c = 0; c < ds.spec.n_classes(); ++c) {
        std::vector<const vrx::world::LabeledImage*> class_images;
        for (const auto& im : ds.images)
          if (im.label == c && class_images.size() < cfg.bank_images_per_class)
            class_images.push_back(&im);
        auto bank = vrx::vce::discover_concepts(class_images, teacher, c, cfg.vce, cfg.seed, fill);
        const std::string path =
            (fs::path(cfg.out_dir) / ("bank_" + std::to_string(c) + ".json")).string();
        vrx::vce::save_bank(bank, path);
        std::cout << "class " << c << ": " << bank.concepts.size() << " concepts -> " << path
                  << "\n";
      }
      return 0;
    }
    if (*bs) {
      auto teacher = vrx::world::Teacher::load(bs_teacher);
      auto banks = load_banks_dir(bs_banks);
      auto image = vrx::ad::load_tensor(bs_image);
      auto hs = vrx::scg::build_hypotheses(image, banks, teacher, cfg.detect);
      json j;
      j["image_id"] = hs.image_id;
      j["hypotheses"] = json::array();
      for (const auto& g : hs.hypotheses) j["hypotheses"].push_back(vrx::scg::serialize_scg(g));
      const std::string path = (fs::path(cfg.out_dir) / "hypotheses.json").string();
      write_text(path, j.dump(2));
      std::cout << "wrote " << hs.size() << " hypotheses -> " << path << "\n";
      return 0;
    }
    if (*di) {
      auto ds = vrx::world::import_dataset(di_data);
      auto teacher = vrx::world::Teacher::load(di_teacher);
      auto banks = load_banks_dir(di_banks);
      const auto fill = ds.mean_pixel();
      auto samples = vrx::grn::build_distill_samples(ds, teacher, banks, cfg.detect,
                                                     vrx::derive_seed(cfg.seed, 5), true, fill);
      vrx::grn::GrnConfig gcfg = cfg.grn;
      gcfg.n_classes = ds.spec.n_classes();
      gcfg.node_dims[0] = teacher.feature_dim();
      vrx::grn::GrnModel model(gcfg, vrx::derive_seed(cfg.seed, 7));
      vrx::grn::DistillConfig dcfg = cfg.distill;
      if (di_epochs > 0) dcfg.epochs = di_epochs;
      auto hist = vrx::grn::distill_train(model, samples, dcfg, vrx::derive_seed(cfg.seed, 8));
      std::vector<std::string> hashes;
      for (const auto& b : banks) hashes.push_back(b.config_hash);
      model.save(cfg.out_dir, hashes);
      vrx::grn::save_history_csv(hist, (fs::path(cfg.out_dir) / "history.csv").string());
      std::cout << "distilled model -> " << cfg.out_dir << " (final loss "
                << (hist.history.empty() ? 0.0 : hist.history.back().loss) << ")\n";
      return 0;
    }
    if (*ex) {
      auto teacher = vrx::world::Teacher::load(ex_teacher);
      auto banks = load_banks_dir(ex_banks);
      auto model = vrx::grn::GrnModel::load(ex_model);
      auto image = vrx::ad::load_tensor(ex_image);
      auto expl = vrx::vdi::explain(image, model, teacher, banks, cfg.detect);
      const std::string text = vrx::vdi::render_explanation(expl, format);
      if (ex_out.empty()) {
        std::cout << text << "\n";
      } else {
        write_text(ex_out, text);
        std::cout << "wrote explanation -> " << ex_out << "\n";
      }
      return 0;
    }
    if (*ew) {
      auto model = vrx::grn::GrnModel::load(ew_model);
      auto m = model.export_edge_weights(ew_class);
      if (format == "csv") {
        std::ostringstream os;
        for (const auto& row : m) {
          for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
          os << "\n";
        }
        std::cout << os.str();
      } else {
        json j;
        j["class_id"] = ew_class;
        j["edge_weights"] = m;
        std::cout << j.dump(2) << "\n";
      }
      return 0;
    }
    if (*xl || *xs) {
      auto art = vrx::harness::run_pipeline(cfg, &std::cerr);
      vrx::harness::ExperimentReport rep = *xl ? vrx::harness::run_logic_consistency(art, &std::cerr)
                                               : vrx::harness::run_sensitivity(art, &std::cerr);
      rep.save(cfg.out_dir);
      std::cout << rep.experiment_id << ": " << (rep.passed ? "PASS" : "FAIL") << " -> "
                << cfg.out_dir << "\n";
      return rep.passed ? 0 : 2;
    }
    if (*xb) {
      auto rep = vrx::harness::run_bias_diagnosis(cfg, &std::cerr);
      rep.save(cfg.out_dir);
      std::cout << rep.experiment_id << ": " << (rep.passed ? "PASS" : "FAIL") << " -> "
                << cfg.out_dir << "\n";
      return rep.passed ? 0 : 2;
    }
    if (*rp) {
      std::ifstream in(rp_in);
      if (!in) throw vrx::Error("cannot open " + rp_in);
      json j;
      in >> j;
      if (format == "csv") {
        vrx::harness::ExperimentReport rep;
        rep.experiment_id = j.value("experiment_id", "report");
        rep.trials = j.value("trials", json::array());
        std::cout << rep.to_csv();
      } else {
        json summary;
        summary["experiment_id"] = j.value("experiment_id", "");
        summary["passed"] = j.value("passed", false);
        summary["aggregates"] = j.value("aggregates", json::object());
        std::cout << summary.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
