// SPDX-License-Identifier: Apache-2.0
// Command-line front end: data preparation, completer training, the joint loop and
// evaluation.

#include "jointkb/agent.hpp"
#include "jointkb/completer.hpp"
#include "jointkb/errors.hpp"
#include "jointkb/eval.hpp"
#include "jointkb/joint_trainer.hpp"
#include "jointkb/kb_store.hpp"
#include "jointkb/llm_backend.hpp"
#include "jointkb/text.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <memory>

using namespace jointkb;

namespace
{

constexpr int exit_usage = 2;
constexpr int exit_failure = 1;

struct CommandOptions
{
    std::string split = "test";
    std::string ks = "1,3,10";
    bool filtered = false;
    std::filesystem::path checkpoint;
    std::filesystem::path qa;
    std::string question;
    std::vector<std::string> topics;
    bool show_trajectory = false;
    bool resume = false;
    std::filesystem::path log;
    std::string optimizer = "adam";
    bool verbose = false;
};

void require(bool ok, std::string_view message)
{
    if (!ok)
        throw ArgumentError(std::string(message));
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::ofstream out(path);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    out << j.dump(2) << '\n';
}

struct LoadedData
{
    KnowledgeBase kb;
    TripleSet train;
};

LoadedData load_data(const RunConfig& config)
{
    require(!config.data_dir.empty(), "--data is required");
    auto const& dir = config.data_dir;
    LoadedData data { load_kb(dir / "train.tsv", dir / "entities.tsv", dir / "relations.tsv"), {} };
    data.kb.add_noop_loops_for_isolated();
    data.train = data.kb.triples();
    return data;
}

std::filesystem::path checkpoint_path(const RunConfig& config, const CommandOptions& cmd)
{
    if (!cmd.checkpoint.empty())
        return cmd.checkpoint;
    require(!config.run_dir.empty(), "--run-dir or --checkpoint is required");
    return config.run_dir / "completer.json";
}

std::unique_ptr<CompleterModel> make_completer(const RunConfig& config)
{
    if (config.completer == "remote")
        return std::make_unique<RemoteCompleter>(RemoteCompleterConfig {
            config.completer_endpoint, config.num_samples, config.completer_temperature, config.max_context });
    return std::make_unique<NativeCompleter>();
}

std::unique_ptr<CompleterModel> load_completer(const RunConfig& config, const CommandOptions& cmd)
{
    if (config.completer == "remote")
        return make_completer(config);
    return std::make_unique<NativeCompleter>(NativeCompleter::load(checkpoint_path(config, cmd)));
}

std::unique_ptr<LlmBackend> make_llm(const RunConfig& config)
{
    if (!config.scripted.empty())
        return std::make_unique<ScriptedBackend>(ScriptedBackend::read_script(config.scripted));
    auto live = LiveBackendConfig::from_env();
    if (!config.llm_endpoint.empty())
        live.endpoint = config.llm_endpoint;
    if (!config.llm_model.empty())
        live.model = config.llm_model;
    if (!config.llm_api_key.empty())
        live.api_key = config.llm_api_key;
    live.max_concurrency = config.llm_concurrency;
    if (live.api_key.empty())
        throw ArgumentError("no LLM credential: set JOINTKB_LLM_API_KEY, pass --llm-api-key, or use --scripted");
    return std::make_unique<LiveBackend>(live);
}

std::vector<std::size_t> parse_ks(const std::string& text)
{
    std::vector<std::size_t> ks;
    for (auto const& part: split(text, ','))
    {
        auto const t = trim(part);
        if (t.empty())
            continue;
        std::size_t k = 0;
        try
        {
            k = std::stoul(std::string(t));
        }
        catch (const std::exception&)
        {
            throw ArgumentError(fmt::format("invalid k '{}'", t));
        }
        require(k > 0, "k values must be positive");
        ks.push_back(k);
    }
    require(!ks.empty(), "--k needs at least one value");
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

int cmd_kb_prepare(const RunConfig& config)
{
    require(!config.source_triples.empty() && !config.source_entities.empty() && !config.source_relations.empty(),
            "kb prepare needs --triples, --entities and --relations");
    require(!config.data_dir.empty(), "--data (output directory) is required");
    auto const kb = load_kb(config.source_triples, config.source_entities, config.source_relations);
    auto const bundle = split(kb, config.n_valid, config.n_test, config.seed);
    auto const train = degrade(bundle.train, config.keep_fraction, config.seed, kb);

    std::filesystem::create_directories(config.data_dir);
    write_entities(config.data_dir / "entities.tsv", kb);
    write_relations(config.data_dir / "relations.tsv", kb);
    write_triples(config.data_dir / "train_full.tsv", bundle.train);
    write_triples(config.data_dir / "train.tsv", train);
    write_triples(config.data_dir / "valid.tsv", bundle.valid);
    write_triples(config.data_dir / "test.tsv", bundle.test);
    write_json(config.data_dir / "prepare.json", config.to_json());
    fmt::print("entities: {}\nrelations: {}\ntriples: {}\ntrain_full: {}\ntrain: {}\nvalid: {}\ntest: {}\n",
               kb.entities().size(), kb.relations().size(), kb.triples().size(), bundle.train.size(), train.size(),
               bundle.valid.size(), bundle.test.size());
    return 0;
}

int cmd_pretrain(const RunConfig& config)
{
    require(!config.run_dir.empty(), "--run-dir is required");
    auto data = load_data(config);
    auto completer = make_completer(config);
    auto const report = completer->pretrain(data.train, data.kb, config.training);
    std::filesystem::create_directories(config.run_dir);
    write_json(config.run_dir / "config.json", config.to_json());
    if (auto* native = dynamic_cast<NativeCompleter*>(completer.get()))
        native->save(config.run_dir / "completer.json");
    if (!report.epoch_losses.empty())
        fmt::print("epochs: {}\ninitial_loss: {:.6f}\nfinal_loss: {:.6f}\n", report.epoch_losses.size(),
                   report.epoch_losses.front(), report.epoch_losses.back());
    else
        fmt::print("pretraining delegated to {}\n", config.completer_endpoint);
    return 0;
}

int cmd_train_joint(const RunConfig& config, const CommandOptions& cmd)
{
    require(!config.run_dir.empty(), "--run-dir is required");
    require(!cmd.qa.empty(), "--qa is required");
    auto data = load_data(config);
    auto completer = load_completer(config, cmd);
    auto llm = make_llm(config);
    auto const questions = load_qa(cmd.qa);
    ReplayMemory memory(data.train, config.seed);

    JointConfig joint;
    joint.agent = config.agent;
    joint.training = config.training;
    joint.samples_per_triple = config.samples_per_triple;
    joint.run_dir = config.run_dir;
    joint.resume = cmd.resume;
    write_json(config.run_dir.empty() ? "config.json" : config.run_dir / "config.json", config.to_json());
    auto const report = train_joint(data.kb, questions, *completer, memory, *llm, joint);
    fmt::print("questions: {}\ncompleted: {}\nskipped: {}\nresumed: {}\nfinetune_calls: {}\npath_triples: {}\n",
               report.questions, report.completed, report.skipped, report.resumed, report.finetune_calls,
               report.path_triples);
    return report.skipped == 0 ? 0 : exit_failure;
}

int cmd_eval_kbc(const RunConfig& config, const CommandOptions& cmd)
{
    require(cmd.split == "test" || cmd.split == "valid", "--split must be test or valid");
    auto data = load_data(config);
    auto completer = load_completer(config, cmd);
    auto const eval_set = load_triples(config.data_dir / (cmd.split + ".tsv"), data.kb);

    TripleSet known;
    KbcEvalOptions options;
    options.ks = parse_ks(cmd.ks);
    options.filtered = cmd.filtered;
    if (cmd.filtered)
    {
        known = data.train;
        for (auto const* name: { "valid.tsv", "test.tsv", "train_full.tsv" })
            if (std::filesystem::exists(config.data_dir / name))
                for (auto const& t: load_triples(config.data_dir / name, data.kb))
                    known.insert(t);
        options.known = &known;
    }
    auto const result = evaluate_kbc(*completer, data.kb, eval_set, options);
    fmt::print("split: {}\nprotocol: {}\n{}", cmd.split, cmd.filtered ? "filtered" : "raw", result.to_text());
    if (!config.run_dir.empty())
    {
        std::filesystem::create_directories(config.run_dir);
        auto j = result.to_json();
        j["split"] = cmd.split;
        j["protocol"] = cmd.filtered ? "filtered" : "raw";
        write_json(config.run_dir / fmt::format("kbc_{}_report.json", cmd.split), j);
    }
    return 0;
}

int cmd_answer(const RunConfig& config, const CommandOptions& cmd)
{
    require(!cmd.question.empty(), "--question is required");
    auto data = load_data(config);
    auto completer = load_completer(config, cmd);
    auto llm = make_llm(config);
    std::vector<EntityId> topics;
    for (auto const& t: cmd.topics)
        topics.emplace_back(t);
    Agent agent(data.kb, *completer, *llm, config.agent);
    auto const trajectory = agent.run_episode(cmd.question, topics);
    if (cmd.show_trajectory)
        fmt::print("{}\n", to_json(trajectory).dump(2));
    fmt::print("{}\n", join(trajectory.final_answers, " | "));
    return trajectory.termination == Termination::error ? exit_failure : 0;
}

int cmd_eval_kbqa(const RunConfig& config, const CommandOptions& cmd)
{
    require(!cmd.qa.empty(), "--qa is required");
    require(!config.run_dir.empty(), "--run-dir is required");
    auto data = load_data(config);
    auto completer = load_completer(config, cmd);
    auto llm = make_llm(config);
    auto const questions = load_qa(cmd.qa);
    Agent agent(data.kb, *completer, *llm, config.agent);

    std::filesystem::create_directories(config.run_dir);
    auto const log_path = config.run_dir / "kbqa_trajectories.jsonl";
    {
        std::ofstream log(log_path);
        for (std::size_t i = 0; i < questions.size(); ++i)
        {
            auto const& qa = questions[i];
            auto const trajectory = agent.run_episode(qa.question, qa.topic_entities);
            auto record = to_json(trajectory, true);
            record["index"] = i;
            record["gold_answers"] = qa.gold_answers;
            log << record.dump() << '\n';
        }
    }
    auto const result = efficiency_report(log_path);
    fmt::print("{}", result.to_text());
    write_json(config.run_dir / "kbqa_report.json", result.to_json());
    return 0;
}

int cmd_report(const CommandOptions& cmd)
{
    require(!cmd.log.empty(), "--log is required");
    fmt::print("{}", efficiency_report(cmd.log).to_text());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    RunConfig config;
    CommandOptions cmd;

    CLI::App app { "Joint knowledge-base completion and question answering", "jointkb" };
    app.set_config("--config", "", "Flat key=value configuration file (keys are long option names)");
    app.fallthrough();
    app.require_subcommand(1);

    app.add_option("--data", config.data_dir, "Prepared data directory");
    app.add_option("--run-dir", config.run_dir, "Run directory for checkpoints, logs and reports");
    app.add_option("--seed", config.seed, "Random seed")->capture_default_str();
    app.add_option("--triples", config.source_triples, "Source triples file (kb prepare)");
    app.add_option("--entities", config.source_entities, "Source entities file (kb prepare)");
    app.add_option("--relations", config.source_relations, "Source relations file (kb prepare)");
    app.add_option("--n-valid", config.n_valid, "Validation triples to hold out")->capture_default_str();
    app.add_option("--n-test", config.n_test, "Test triples to hold out")->capture_default_str();
    app.add_option("--keep-fraction", config.keep_fraction, "Fraction of training triples kept")
        ->capture_default_str();
    app.add_option("--completer", config.completer, "native or remote")->capture_default_str();
    app.add_option("--completer-endpoint", config.completer_endpoint, "Remote completer base URL");
    app.add_option("--num-samples", config.num_samples, "Remote decode samples")->capture_default_str();
    app.add_option("--completer-temperature", config.completer_temperature, "Remote decode temperature")
        ->capture_default_str();
    app.add_option("--max-context", config.max_context, "Context triples per input sequence")
        ->capture_default_str();
    app.add_option("--dim", config.training.dim, "Embedding width")->capture_default_str();
    app.add_option("--epochs", config.training.epochs, "Pretraining epochs")->capture_default_str();
    app.add_option("--batch-size", config.training.batch_size, "Minibatch size")->capture_default_str();
    app.add_option("--learning-rate", config.training.learning_rate, "Optimizer step size")->capture_default_str();
    app.add_option("--optimizer", cmd.optimizer, "adam or sgd")
        ->check(CLI::IsMember({ "adam", "sgd" }))
        ->capture_default_str();
    app.add_option("--finetune-passes", config.training.finetune_passes, "Passes per incremental update")
        ->capture_default_str();
    app.add_option("--samples-per-triple", config.samples_per_triple, "Replay samples per path triple")
        ->capture_default_str();
    app.add_option("--max-steps", config.agent.max_steps, "Agent step limit L")->capture_default_str();
    app.add_option("--max-llm-calls-per-step", config.agent.max_llm_calls_per_step, "Per-step call allowance N")
        ->capture_default_str();
    app.add_option("--complete-top-k", config.agent.complete_top_k, "Triples returned by Complete")
        ->capture_default_str();
    app.add_option("--relations-per-search", config.agent.relations_per_search, "Relations chosen per Search")
        ->capture_default_str();
    app.add_option("--llm-temperature", config.agent.llm.temperature, "LLM sampling temperature")
        ->capture_default_str();
    app.add_option("--llm-max-tokens", config.agent.llm.max_tokens, "LLM completion limit")->capture_default_str();
    app.add_option("--llm-endpoint", config.llm_endpoint, "Chat-completions base URL (overrides JOINTKB_LLM_ENDPOINT)");
    app.add_option("--llm-model", config.llm_model, "Model name (overrides JOINTKB_LLM_MODEL)");
    app.add_option("--llm-api-key", config.llm_api_key, "API key (overrides JOINTKB_LLM_API_KEY)");
    app.add_option("--llm-concurrency", config.llm_concurrency, "Concurrent LLM requests")->capture_default_str();
    app.add_option("--scripted", config.scripted, "Replay LLM responses from a JSONL transcript");
    app.add_flag("-v,--verbose", cmd.verbose, "Debug logging");

    auto* kb = app.add_subcommand("kb", "Knowledge-base utilities");
    kb->require_subcommand(1);
    auto* prepare = kb->add_subcommand("prepare", "Split and degrade a KB into a data directory");
    auto* pretrain = app.add_subcommand("pretrain", "Train the completer on the training triples");
    auto* train = app.add_subcommand("train-joint", "Run the joint loop over a QA training file");
    train->add_option("--qa", cmd.qa, "QA file (JSON lines)")->required();
    train->add_option("--checkpoint", cmd.checkpoint, "Completer checkpoint (default: <run-dir>/completer.json)");
    train->add_flag("--resume", cmd.resume, "Continue an interrupted run");
    auto* eval_kbc = app.add_subcommand("eval-kbc", "Tail-prediction metrics");
    eval_kbc->add_option("--split", cmd.split, "test or valid")->capture_default_str();
    eval_kbc->add_option("--k", cmd.ks, "Comma-separated Hits@k cutoffs")->capture_default_str();
    eval_kbc->add_flag("--filtered", cmd.filtered, "Filtered ranking protocol (default raw)");
    eval_kbc->add_option("--checkpoint", cmd.checkpoint, "Completer checkpoint");
    auto* answer = app.add_subcommand("answer", "Answer one question");
    answer->add_option("--question", cmd.question, "Question text")->required();
    answer->add_option("--topic", cmd.topics, "Topic entity id (repeatable)");
    answer->add_option("--checkpoint", cmd.checkpoint, "Completer checkpoint");
    answer->add_flag("--show-trajectory", cmd.show_trajectory, "Print the trajectory as JSON");
    auto* eval_kbqa = app.add_subcommand("eval-kbqa", "Answer a QA file and score Hits@1");
    eval_kbqa->add_option("--qa", cmd.qa, "QA file (JSON lines)")->required();
    eval_kbqa->add_option("--checkpoint", cmd.checkpoint, "Completer checkpoint");
    auto* report = app.add_subcommand("report", "Efficiency summary of a trajectory log");
    report->add_option("--log", cmd.log, "Trajectory log (JSON lines)")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return exit_usage;
    }

    spdlog::set_level(cmd.verbose ? spdlog::level::debug : spdlog::level::warn);
    config.training.optimizer = cmd.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
    config.training.seed = config.seed;

    try
    {
        config.validate();
        if (prepare->parsed())
            return cmd_kb_prepare(config);
        if (pretrain->parsed())
            return cmd_pretrain(config);
        if (train->parsed())
            return cmd_train_joint(config, cmd);
        if (eval_kbc->parsed())
            return cmd_eval_kbc(config, cmd);
        if (answer->parsed())
            return cmd_answer(config, cmd);
        if (eval_kbqa->parsed())
            return cmd_eval_kbqa(config, cmd);
        if (report->parsed())
            return cmd_report(cmd);
    }
    catch (const ArgumentError& e)
    {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_usage;
    }
    catch (const std::exception& e)
    {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_failure;
    }
    return exit_usage;
}
