#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing file: " << path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char ch : text)
    if (ch == '\n') ++n;
  return n;
}

size_t count_fields(const std::string& line) {
  size_t n = 1;
  for (char ch : line)
    if (ch == ',') ++n;
  return n;
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

struct CliFixture {
  fs::path dir;

  CliFixture() {
    static int counter = 0;
    dir = fs::temp_directory_path() / ("glsdiag_cli_" + std::to_string(++counter));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~CliFixture() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  CmdResult run(const std::string& args) const {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(GLSDIAG_CLI_PATH) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CmdResult result;
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = read_file(out);
    result.err = read_file(err);
    return result;
  }

  std::string sub(const std::string& name) const {
    const fs::path p = dir / name;
    fs::create_directories(p);
    return p.string();
  }
};

const std::string kData = std::string(GLSDIAG_SOURCE_DIR) + "/data/synthetic";
const std::string kMeanModel = kData + "/mean_model.csv";
const std::string kLongSmall = kData + "/long_small.csv";
const std::string kDesign = kData + "/design_522";

const std::string kLongSmallModel =
    " --family ar1 --rho 0.4 --numeric dose --categorical arm=a";

}  // namespace

TEST_CASE("fit writes the expected summary for the mean-only example") {
  CliFixture cli;
  const auto res = cli.run("fit --input " + kMeanModel + " --out " + cli.sub("fit"));
  CHECK(res.code == 0);
  CHECK(res.out.find("fit: n=3 p=1 family=identity") != std::string::npos);

  const auto j = nlohmann::json::parse(read_file(cli.dir / "fit" / "fit.json"));
  CHECK(j["n"] == 3);
  CHECK(j["p"] == 1);
  CHECK(j["family"] == "identity");
  CHECK(j["rho_estimated"] == false);
  CHECK(j["beta"]["intercept"].get<double>() == doctest::Approx(1.0));
  CHECK(j["sigma2"].get<double>() == doctest::Approx(3.0));
}

TEST_CASE("fit consumes a verbatim design triplet") {
  CliFixture cli;
  const auto res = cli.run("fit --x " + kDesign + "/X.csv --y " + kDesign +
                           "/Y.csv --groups " + kDesign +
                           "/groups.csv --family car1 --rho 0.5 --out " +
                           cli.sub("fit"));
  CHECK(res.code == 0);
  const auto j = nlohmann::json::parse(read_file(cli.dir / "fit" / "fit.json"));
  CHECK(j["n"] == 522);
  CHECK(j["p"] == 6);
  CHECK(j["family"] == "car1");
  CHECK(j["beta"].contains("x1"));
  CHECK(j["beta"].contains("x6"));
}

TEST_CASE("fit can estimate rho from the data") {
  CliFixture cli;
  const auto res = cli.run("fit --input " + kLongSmall +
                           " --family ar1 --estimate-rho --numeric dose"
                           " --categorical arm=a --out " +
                           cli.sub("fit"));
  CHECK(res.code == 0);
  const auto j = nlohmann::json::parse(read_file(cli.dir / "fit" / "fit.json"));
  CHECK(j["rho_estimated"] == true);
  const double rho = j["rho"].get<double>();
  CHECK(rho > -1.0);
  CHECK(rho < 1.0);
  CHECK(j["beta"].contains("dose"));
  CHECK(j["beta"].contains("arm=b"));
  CHECK(j["beta"].contains("arm=c"));
}

TEST_CASE("diagnose writes one row per observation or subject") {
  CliFixture cli;
  const auto loo = cli.run("diagnose --input " + kLongSmall + kLongSmallModel +
                           " --scheme loo --out " + cli.sub("loo"));
  CHECK(loo.code == 0);
  const std::string loo_table = read_file(cli.dir / "loo" / "diagnostics.csv");
  CHECK(count_lines(loo_table) == 33);  // header + 32 observations
  CHECK(count_fields(first_line(loo_table)) == 14);
  CHECK(loo_table.find(",singular") == std::string::npos);
  CHECK(loo.out.find("rows=32 valid=32") != std::string::npos);

  const auto subj = cli.run("diagnose --input " + kLongSmall + kLongSmallModel +
                            " --scheme subject --out " + cli.sub("subject"));
  CHECK(subj.code == 0);
  const std::string subj_table = read_file(cli.dir / "subject" / "diagnostics.csv");
  CHECK(count_lines(subj_table) == 9);  // header + 8 subjects
  CHECK(count_fields(first_line(subj_table)) == 8);
  CHECK(subj.out.find("rows=8 valid=8") != std::string::npos);
}

TEST_CASE("cv reruns are byte-identical and the oracle agrees") {
  CliFixture cli;
  const std::string args = "cv --input " + kLongSmall + kLongSmallModel +
                           " --scheme kfold --k 5 --seed 3 --rho-policy fixed";
  const auto a = cli.run(args + " --out " + cli.sub("a"));
  const auto b = cli.run(args + " --out " + cli.sub("b"));
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(read_file(cli.dir / "a" / "cv_folds.csv") ==
        read_file(cli.dir / "b" / "cv_folds.csv"));
  CHECK(read_file(cli.dir / "a" / "cv_summary.json") ==
        read_file(cli.dir / "b" / "cv_summary.json"));

  const auto j = nlohmann::json::parse(read_file(cli.dir / "a" / "cv_summary.json"));
  CHECK(j["scheme"] == "kfold");
  CHECK(j["rho_policy"] == "fixed");
  CHECK(j["n_folds"] == 5);
  CHECK(j["n_valid"] == 5);
  CHECK(j["max_abs_error"].get<double>() < 1e-6);

  const std::string table = read_file(cli.dir / "a" / "cv_folds.csv");
  CHECK(count_lines(table) == 6);
  CHECK(count_fields(first_line(table)) == 10);
}

TEST_CASE("simulate tracks watched observations deterministically") {
  CliFixture cli;
  const std::string base = "simulate --x " + kDesign + "/X.csv --y " + kDesign +
                           "/Y.csv --groups " + kDesign +
                           "/groups.csv --family car1 --rho 0.5 "
                           "--k 10 --n-sims 300 --seed 1";
  const auto a = cli.run(base + " --watch 258 --out " + cli.sub("a"));
  const auto b = cli.run(base + " --watch 258 --out " + cli.sub("b"));
  const auto plain = cli.run(base + " --out " + cli.sub("plain"));
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(plain.code == 0);

  const std::string folds = read_file(cli.dir / "a" / "sim_folds.csv");
  CHECK(folds == read_file(cli.dir / "b" / "sim_folds.csv"));
  CHECK(read_file(cli.dir / "a" / "sim_means.json") ==
        read_file(cli.dir / "b" / "sim_means.json"));
  CHECK(count_lines(folds) == 3001);  // header + 10 folds x 300 sims

  // observation 258 lands in exactly one fold per simulation
  size_t flagged = 0;
  std::istringstream lines(folds);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line))
    if (line.find(",1,ok") != std::string::npos) ++flagged;
  CHECK(flagged == 300);

  const std::string unwatched = read_file(cli.dir / "plain" / "sim_folds.csv");
  CHECK(unwatched.find(",1,ok") == std::string::npos);

  const auto j = nlohmann::json::parse(read_file(cli.dir / "a" / "sim_means.json"));
  CHECK(j["k"] == 10);
  CHECK(j["n_sims"] == 300);
  CHECK(j["sim_means"].size() == 300);
  CHECK(j["sd_sim_means"].get<double>() > 0.0);
  CHECK(j["sd_fold_srds"].get<double>() > j["sd_sim_means"].get<double>());
  CHECK(j["watched_mean_srd"].is_number());
}

TEST_CASE("check passes on the bundled datasets") {
  CliFixture cli;
  const auto small = cli.run("check --input " + kLongSmall + kLongSmallModel +
                             " --out " + cli.sub("small"));
  CHECK(small.code == 0);
  CHECK(small.out.find("check: ok") != std::string::npos);
  CHECK(small.out.find("FAIL") == std::string::npos);

  const auto big = cli.run("check --x " + kDesign + "/X.csv --y " + kDesign +
                           "/Y.csv --groups " + kDesign +
                           "/groups.csv --family car1 --rho 0.5 --out " +
                           cli.sub("big"));
  CHECK(big.code == 0);
  CHECK(big.out.find("check: ok") != std::string::npos);
}

TEST_CASE("usage problems exit with code 1") {
  CliFixture cli;
  CHECK(cli.run("").code == 1);
  CHECK(cli.run("fit --bogus-flag").code == 1);
  CHECK(cli.run("fit").code == 1);         // neither input mode given
  CHECK(cli.run("frobnicate").code == 1);  // unknown subcommand
  CHECK(cli.run("--help").code == 0);

  const auto both = cli.run("fit --input " + kMeanModel + " --x " + kDesign +
                            "/X.csv --y " + kDesign + "/Y.csv --groups " + kDesign +
                            "/groups.csv");
  CHECK(both.code == 1);

  const auto bad_rho =
      cli.run("fit --input " + kMeanModel + " --family car1 --rho 1.5");
  CHECK(bad_rho.code == 1);
  CHECK(bad_rho.err.find("car1") != std::string::npos);

  const auto bad_cat = cli.run("fit --input " + kLongSmall +
                               " --categorical arm --out " + cli.sub("x"));
  CHECK(bad_cat.code == 1);
}

TEST_CASE("data problems exit with code 2") {
  CliFixture cli;
  const auto missing = cli.run("fit --input " + cli.dir.string() + "/absent.csv");
  CHECK(missing.code == 2);
  CHECK(missing.err.find("cannot open") != std::string::npos);

  std::ofstream(cli.dir / "X.csv") << "1,0\n1,1\n1,2\n";
  std::ofstream(cli.dir / "Y.csv") << "1\n2\n";
  std::ofstream(cli.dir / "groups.csv") << "subject_id,time\ns1,0\ns1,1\ns1,2\n";
  const auto mismatch =
      cli.run("fit --x " + (cli.dir / "X.csv").string() + " --y " +
              (cli.dir / "Y.csv").string() + " --groups " +
              (cli.dir / "groups.csv").string());
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("dimension mismatch") != std::string::npos);

  const auto unknown_col = cli.run("fit --input " + kLongSmall +
                                   " --numeric dosage --out " + cli.sub("y"));
  CHECK(unknown_col.code == 2);
  CHECK(unknown_col.err.find("unknown column 'dosage'") != std::string::npos);
}

TEST_CASE("numerical degeneracies exit with code 3") {
  CliFixture cli;
  const auto res = cli.run("fit --input " + kLongSmall +
                           " --family ar1 --rho 0.9999999999999 --out " +
                           cli.sub("z"));
  CHECK(res.code == 3);
  CHECK(res.err.find("numerically singular") != std::string::npos);
}
