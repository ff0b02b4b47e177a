#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dehrl/config.hpp"
#include "dehrl/envs.hpp"
#include "dehrl/hierarchy.hpp"
#include "dehrl/metrics.hpp"
#include "dehrl/runner.hpp"

namespace py = pybind11;
using namespace dehrl;

namespace {

py::array_t<double> to_array(const Observation& o) {
    py::array_t<double> a({o.channels, o.height, o.width});
    std::copy(o.data.begin(), o.data.end(), a.mutable_data());
    return a;
}

Observation from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3)
        throw std::invalid_argument("observation must be a 3-d array (channels, height, width)");
    Observation o(a.shape(0), a.shape(1), a.shape(2));
    std::copy(a.data(), a.data() + a.size(), o.data.begin());
    return o;
}

// Runs a CLI verb and hands back (exit code, stdout, stderr).
template <typename F>
py::tuple capture(F&& verb) {
    std::ostringstream out, err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = verb(out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

std::unique_ptr<Environment> env_from_json(const std::string& env_json, std::uint64_t seed) {
    const auto cfg = parse_config("{\"env\": " + env_json + ", \"baseline\": {\"kind\": \"ppo\"}, \"budget\": 1}");
    return make_environment(cfg.env, seed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Levelwise hierarchical RL with a diversity-driven intrinsic reward";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    py::class_<StepOutcome>(m, "StepOutcome")
        .def_readonly("reward", &StepOutcome::reward)
        .def_readonly("done", &StepOutcome::done);

    py::class_<Environment>(m, "Environment")
        .def_property_readonly("name", &Environment::name)
        .def_property_readonly("action_count", &Environment::action_count)
        .def_property_readonly("observation_shape", &Environment::observation_shape)
        .def("reset", [](Environment& e) { return to_array(e.reset()); })
        .def("step",
             [](Environment& e, std::size_t a) {
                 const auto out = e.step(a);
                 return py::make_tuple(to_array(e.observe()), out.reward, out.done);
             })
        .def("observe", [](const Environment& e) { return to_array(e.observe()); })
        .def("episode_stats", &Environment::episode_stats)
        .def("hash", &Environment::hash);

    m.def("make_environment", &env_from_json, py::arg("env_json"), py::arg("seed") = 1,
          "Environment from the JSON text of a run config's \"env\" section.");

    m.def(
        "state_distance",
        [](const py::array_t<double>& a, const py::array_t<double>& b, double alpha) {
            DistanceConfig c;
            c.alpha = alpha;
            return state_distance(from_array(a), from_array(b), c);
        },
        py::arg("a"), py::arg("b"), py::arg("alpha") = 0.5);

    m.def(
        "final_performance_score",
        [](const std::vector<double>& rewards) {
            EpisodeLog log;
            for (std::size_t i = 0; i < rewards.size(); ++i)
                log.push({i + 1, rewards[i], 0, 0});
            return final_performance_score(log);
        },
        py::arg("rewards"));
    m.def(
        "learning_speed_score",
        [](const std::vector<double>& rewards) {
            EpisodeLog log;
            for (std::size_t i = 0; i < rewards.size(); ++i)
                log.push({i + 1, rewards[i], 0, 0});
            return learning_speed_score(log);
        },
        py::arg("rewards"));

    m.def(
        "read_metrics",
        [](const std::string& text) {
            std::istringstream in(text);
            std::vector<py::tuple> rows;
            for (const auto& r : read_metrics(in))
                rows.push_back(py::make_tuple(r.step, r.key, r.value));
            return rows;
        },
        py::arg("text"), "Parses a metrics stream into (step, key, value) tuples.");

    m.def(
        "validate_config",
        [](const std::string& text) {
            const auto c = parse_config(text);
            py::dict d;
            d["name"] = c.name;
            d["budget"] = c.budget;
            d["seeds"] = c.seeds;
            d["levels"] = effective_hierarchy(c).levels.size();
            d["action_count"] = c.env.action_count();
            return d;
        },
        py::arg("text"), "Parses a run config; raises ConfigError naming the offending key.");

    py::class_<Hierarchy>(m, "Agent")
        .def(py::init([](const std::string& text, std::uint64_t seed) {
                 return build_agent(parse_config(text), seed);
             }),
             py::arg("config_json"), py::arg("seed") = 1)
        .def("step",
             [](Hierarchy& h, std::size_t n) {
                 py::gil_scoped_release release;
                 for (std::size_t i = 0; i < n; ++i)
                     h.step();
             },
             py::arg("n") = 1, "Advances every actor by n primitive steps.")
        .def_property_readonly("total_steps", &Hierarchy::total_steps)
        .def_property_readonly("episodes_finished", &Hierarchy::episodes_finished)
        .def_property_readonly("level_count", &Hierarchy::level_count)
        .def("mean_policy_entropy", &Hierarchy::mean_policy_entropy, py::arg("level"))
        .def(
            "probe",
            [](const Hierarchy& h, const std::string& env_json, std::size_t level, std::size_t repeats,
               std::uint64_t seed) {
                auto env = env_from_json(env_json, seed);
                const auto r = subpolicy_probe(h, *env, level, repeats);
                std::vector<std::string> labels;
                for (auto l : r.labels)
                    labels.push_back(to_string(l));
                return labels;
            },
            py::arg("env_json"), py::arg("level") = 1, py::arg("repeats") = 32, py::arg("seed") = 1,
            "Displacement label of each subpolicy of `level`.")
        .def("set_episode_callback", [](Hierarchy& h, std::function<void(std::uint64_t, double)> cb) {
            h.set_episode_callback([cb](const Hierarchy::EpisodeRecord& e) {
                py::gil_scoped_acquire acquire;
                cb(e.index, e.reward);
            });
        });

    m.def("run", [](const std::filesystem::path& p) { return capture([&](auto& o, auto& e) { return cli_run(p, o, e); }); },
          py::arg("config_path"), "CLI run verb; returns (exit_code, stdout, stderr).");
    m.def("resume",
          [](const std::filesystem::path& p) { return capture([&](auto& o, auto& e) { return cli_resume(p, o, e); }); },
          py::arg("run_dir"));
    m.def(
        "probe",
        [](const std::filesystem::path& p, std::size_t level, std::size_t repeats) {
            return capture([&](auto& o, auto& e) { return cli_probe(p, level, repeats, o, e); });
        },
        py::arg("run_dir"), py::arg("level") = 1, py::arg("repeats") = 32);
    m.def("report",
          [](const std::filesystem::path& p) { return capture([&](auto& o, auto& e) { return cli_report(p, o, e); }); },
          py::arg("run_dir"));
}
