#include <cstdint>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsce/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "master seed (overrides config)");
}

int run_upto(const CommonOpts& o, tsce::Stage upto) {
  tsce::RunConfig cfg = tsce::load_run_config(o.config_path);
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(o.seed);
  tsce::RunManifest man = tsce::run_pipeline(cfg, upto);
  for (const auto& st : man.stages)
    std::cout << st.name << ": " << st.status
              << (st.error.empty() ? "" : " (" + st.error + ")") << "\n";
  if (!man.ok) {
    std::cerr << "stage failed: " << man.failed_stage << "\n";
    return 1;
  }
  std::cout << "artifacts in " << cfg.output_dir << " (" << man.artifacts.size()
            << " files)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time series clustering, proxy classification and explanation"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    tsce::Stage upto;
  };
  const Sub subs[] = {
      {"preprocess", "load, clean and normalize the dataset", tsce::Stage::preprocess},
      {"selectk", "choose k (elbow) and plan cluster-size levels", tsce::Stage::selectk},
      {"cluster", "fit clustering at every planned level", tsce::Stage::cluster},
      {"classify", "train and evaluate proxy classifiers", tsce::Stage::classify},
      {"explain", "attribute classifier decisions", tsce::Stage::explain_stage},
      {"report", "aggregate artifacts into report.json and figures", tsce::Stage::report},
      {"run", "full pipeline end to end", tsce::Stage::report},
  };
  std::vector<CommonOpts> opts(std::size(subs));
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmd, opts[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < std::size(subs); ++i) {
    if (app.got_subcommand(subs[i].name)) {
      try {
        return run_upto(opts[i], subs[i].upto);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }
  }
  return 2;
}
