#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rome/cli/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

using Command = void (*)(const rome::cli::json&, std::ostream&);

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust mixture regression: simulation, fitting, evaluation and ablation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  struct Sub {
    const char* name;
    const char* help;
    Command run;
  };
  const std::vector<Sub> subs{
      {"simulate", "Run the simulation study (sim.*, em.*, seeds)", rome::cli::cmd_simulate},
      {"fit-em", "Fit the mixture-of-regressions model with robust weights (data.*, split.*, em.*)", rome::cli::cmd_fit_em},
      {"fit-moe", "Train the network model roles listed in moe.roles", rome::cli::cmd_fit_moe},
      {"evaluate", "Score checkpoints on the test split and compare against eval.baseline", rome::cli::cmd_evaluate},
      {"ablate-alpha", "Sweep the worst-group weight over ablation.alphas", rome::cli::cmd_ablate_alpha},
  };

  std::string config_path;
  bool print_config = false;
  std::vector<CLI::App*> handles;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("-c,--config", config_path, "JSON configuration file");
    sc->add_flag("--print-config", print_config, "Print the resolved configuration and exit");
    sc->allow_extras();
    sc->footer("Any configuration key can be overridden with --dot.path value, e.g. --moe.alpha 0.1 --seeds 1 --seeds 2");
    handles.push_back(sc);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (!handles[k]->parsed()) continue;
    try {
      const auto cfg = rome::cli::resolve_config(config_path, handles[k]->remaining());
      if (print_config) {
        std::cout << cfg.dump(2) << "\n";
        return kOk;
      }
      subs[k].run(cfg, std::cerr);
      return kOk;
    } catch (const rome::ConfigError& e) {
      std::cerr << "configuration error: " << e.what() << "\n";
      return kConfig;
    } catch (const rome::ContractError& e) {
      std::cerr << "configuration error: " << e.what() << "\n";
      return kConfig;
    } catch (const rome::DataError& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const rome::Error& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return kNumerical;
    } catch (const std::exception& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return kNumerical;
    }
  }
  return kConfig;
}
