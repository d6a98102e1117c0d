#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fstream>
#include <random>
#include <thread>

#include "phyto/actuation.hpp"
#include "test_support.hpp"

using namespace phyto;
using namespace phyto::actuate;
using detect::DetectorConfig;
using detect::DetectorKind;
using detect::OutputVector;

namespace {

constexpr TimestampMs kT0 = 1'767'225'600'000;

std::vector<DetectorConfig> detectors() {
  return {{"D1", DetectorKind::peak, "bio", pipeline::Tier::short_term, {}},
          {"D2", DetectorKind::peak, "bio", pipeline::Tier::short_term, {}},
          {"D3", DetectorKind::time_interval, "clock", pipeline::Tier::short_term, {{"interval_s", "5"}}},
          {"N1", DetectorKind::mean, "bio", pipeline::Tier::short_term, {}}};
}

std::vector<ActuatorConfig> actuators() {
  return {{"led", ActuatorKind::rgb_led, {}}, {"relay", ActuatorKind::relay, {}}, {"sink", ActuatorKind::generic_sink, {}}};
}

OutputVector vec(std::initializer_list<std::pair<std::string, double>> values, std::uint64_t cycle = 0) {
  OutputVector v;
  v.cycle_id = cycle;
  v.clock_ms = kT0 + TimestampMs(cycle) * 1000;
  for (const auto& [id, x] : values) v.entries.push_back({id, id[0] == 'N', x != 0.0 || id[0] == 'N', x});
  return v;
}

ActuatorBinding binding(const std::string& expr, const std::string& actuator = "led", std::string payload = "R=1") {
  ActuatorBinding b;
  b.id = "b";
  b.expression_text = expr;
  b.actuator = actuator;
  b.payload = std::move(payload);
  return b;
}

std::vector<ActuatorBinding> validated(std::vector<ActuatorBinding> bs) {
  validate_bindings(bs, detectors(), actuators());
  return bs;
}

ActuatorCommand command(const std::string& actuator, std::string payload, TimestampMs t = kT0) {
  return {0, t, "b", actuator, ActuatorKind::generic_sink, std::move(payload)};
}

}  // namespace

TEST(Expression, ParsesAndPrints) {
  EXPECT_EQ(to_string(*parse_expression("D1")), "D1 == 1");
  EXPECT_EQ(to_string(*parse_expression("d1==1 and (D2 OR not D3 >= -1)")), "(d1 == 1 AND (D2 == 1 OR NOT D3 >= -1))");
  EXPECT_EQ(to_string(*parse_expression("BERNOULLI(0.25) AND N1 > 2.5")), "(BERNOULLI(0.25) AND N1 > 2.5)");
  for (const char* bad : {"", "D1 ==", "(D1", "D1 AND", "BERNOULLI(2) AND D1", "D1 D2", "AND D1", "D1 == x"}) {
    EXPECT_THROW(parse_expression(bad), ConfigError) << bad;
  }
}

TEST(Bindings, SingleDetectorFires) {
  const auto bs = validated({binding("D1 == 1")});
  const auto cmds = evaluate_bindings(vec({{"D1", 1}, {"D2", -1}}), bs, actuators(), 1);
  ASSERT_EQ(cmds.size(), 1u);
  EXPECT_EQ(cmds[0].actuator_id, "led");
  EXPECT_EQ(cmds[0].kind, ActuatorKind::rgb_led);
}

TEST(Bindings, ConjunctionWithFalseTermIsSilent) {
  const auto bs = validated({binding("D1==1 AND D2==1")});
  EXPECT_TRUE(evaluate_bindings(vec({{"D1", 1}, {"D2", -1}}), bs, actuators(), 1).empty());
}

TEST(Bindings, NotExecutedEntryBlocksUnlessTested) {
  const auto bs = validated({binding("D1 OR D2")});
  EXPECT_TRUE(evaluate_bindings(vec({{"D1", 1}, {"D2", 0}}), bs, actuators(), 1).empty());
  const auto tested = validated({binding("D1 AND D2 == 0")});
  EXPECT_EQ(evaluate_bindings(vec({{"D1", 1}, {"D2", 0}}), tested, actuators(), 1).size(), 1u);
}

TEST(Bindings, BernoulliHalfOverTenThousandCycles) {
  const auto bs = validated({binding("BERNOULLI(0.5) AND D1==1")});
  int fired = 0;
  for (std::uint64_t c = 0; c < 10000; ++c) fired += int(evaluate_bindings(vec({{"D1", 1}}, c), bs, actuators(), 99).size());
  EXPECT_GE(fired, 5000 - 150);
  EXPECT_LE(fired, 5000 + 150);
}

TEST(Bindings, DeterministicUnderSeed) {
  auto second = binding("D2 OR N1 > 1");
  second.id = "c";
  const auto bs = validated({binding("BERNOULLI(0.3) AND D1"), second});
  std::size_t differs = 0;
  for (std::uint64_t c = 0; c < 500; ++c) {
    const auto v = vec({{"D1", 1}, {"D2", c % 3 ? -1.0 : 1.0}, {"N1", double(c % 5)}}, c);
    const auto a = evaluate_bindings(v, bs, actuators(), 5);
    ASSERT_EQ(a, evaluate_bindings(v, bs, actuators(), 5));
    differs += a != evaluate_bindings(v, bs, actuators(), 6);
  }
  EXPECT_GT(differs, 0u);
}

TEST(Bindings, CommandsInDeclarationOrder) {
  auto a = binding("D1", "relay", "on");
  a.id = "first";
  auto b = binding("D1", "led");
  b.id = "second";
  const auto bs = validated({a, b});
  const auto cmds = evaluate_bindings(vec({{"D1", 1}}), bs, actuators(), 1);
  ASSERT_EQ(cmds.size(), 2u);
  EXPECT_EQ(cmds[0].binding_id, "first");
  EXPECT_EQ(cmds[1].binding_id, "second");
}

TEST(Bindings, ValidationErrors) {
  EXPECT_THROW(validated({binding("DX == 1")}), ConfigError);
  EXPECT_THROW(validated({binding("D1", "nope")}), ConfigError);
  EXPECT_THROW(validated({binding("BERNOULLI(0.5)")}), ConfigError);
  EXPECT_THROW(validated({binding("BERNOULLI(0.5) OR D1")}), ConfigError);
  EXPECT_THROW(validated({binding("NOT D1")}), ConfigError);
  EXPECT_THROW(validated({binding("D1 == -1")}), ConfigError);
  EXPECT_THROW(validated({binding("D1 == 0")}), ConfigError);
  EXPECT_THROW(validated({binding("D1 == 0 AND D2 != 0")}), ConfigError);
  EXPECT_THROW(validated({binding("D1"), binding("D2")}), ConfigError);  // duplicate id
  auto h = binding("D1");
  h.homeostat = HomeostatConfig{0.0, 1.0};
  EXPECT_THROW(validated({h}), ConfigError);
  EXPECT_NO_THROW(validated({binding("D1 AND NOT D2")}));
  EXPECT_NO_THROW(validated({binding("N1 > 3 OR D3")}));
}

TEST(BindingsProperty, NoSpontaneousActuation) {
  // Random expressions; every one that passes validation must stay silent on
  // every vector with no true verdict and no satisfied numeric comparison.
  std::mt19937 rng(17);
  const std::vector<std::string> verdicts{"D1", "D2", "D3"};
  auto leaf = [&]() -> std::string {
    switch (rng() % 6) {
      case 0: return verdicts[rng() % 3];
      case 1: return verdicts[rng() % 3] + " == " + std::to_string(int(rng() % 3) - 1);
      case 2: return verdicts[rng() % 3] + " != " + std::to_string(int(rng() % 3) - 1);
      case 3: return "N1 > 5";
      case 4: return "BERNOULLI(0.5)";
      default: return verdicts[rng() % 3] + " <= 0";
    }
  };
  std::function<std::string(int)> gen = [&](int depth) -> std::string {
    if (depth == 0 || rng() % 3 == 0) return leaf();
    switch (rng() % 3) {
      case 0: return "(" + gen(depth - 1) + " AND " + gen(depth - 1) + ")";
      case 1: return "(" + gen(depth - 1) + " OR " + gen(depth - 1) + ")";
      default: return "NOT " + gen(depth - 1);
    }
  };
  int accepted = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::vector<ActuatorBinding> bs{binding(gen(3))};
    try {
      validate_bindings(bs, detectors(), actuators());
    } catch (const ConfigError&) {
      continue;
    }
    ++accepted;
    for (int mask = 0; mask < 27; ++mask) {
      for (bool numeric_ran : {false, true}) {
        OutputVector v;
        int m = mask;
        for (const auto& id : verdicts) {
          const int s = m % 3;
          m /= 3;
          const double value = s == 0 ? 0.0 : -1.0;
          v.entries.push_back({id, false, s != 0, value});
        }
        v.entries.push_back({"N1", true, numeric_ran, numeric_ran ? 1.0 : 0.0});
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
          ASSERT_TRUE(evaluate_bindings(v, bs, actuators(), seed).empty()) << bs[0].expression_text;
        }
      }
    }
  }
  EXPECT_GT(accepted, 100);
}

TEST(Homeostat, FixedPoint) {
  HomeostatState s{10.0, 2.0, 10.0};
  const auto t = homeostat_update(s, false, 1e-9);
  EXPECT_EQ(t.threshold_adjust, 2.0);
}

TEST(Homeostat, OverFiringRaisesTowardCap) {
  HomeostatState s{1.0, 1.0, 0.0};
  for (int i = 0; i < 2000; ++i) s = homeostat_update(s, true, 1.0);
  EXPECT_EQ(s.threshold_adjust, kAdjustCap);
  EXPECT_GT(s.observed_rate_per_hour, 1.0);
}

TEST(Homeostat, SilenceDecaysTowardFloor) {
  HomeostatState s{1.0, 1.0, 0.0};
  double prev = s.threshold_adjust;
  for (int i = 0; i < 100; ++i) {
    s = homeostat_update(s, false, 1.0);
    ASSERT_LE(s.threshold_adjust, prev);
    prev = s.threshold_adjust;
  }
  EXPECT_EQ(s.threshold_adjust, kAdjustFloor);
}

TEST(HomeostatProperty, Bounded) {
  std::mt19937 rng(2);
  HomeostatState s{5.0, 1.0, 0.0};
  for (int i = 0; i < 100000; ++i) {
    s = homeostat_update(s, rng() % 7 == 0, 0.1 + (rng() % 100) / 10.0, 0.5);
    ASSERT_GE(s.threshold_adjust, kAdjustFloor);
    ASSERT_LE(s.threshold_adjust, kAdjustCap);
  }
}

TEST(Homeostat, ScalesNumericLiterals) {
  const auto bs = validated({binding("N1 > 3")});
  const auto v = vec({{"N1", 4.0}});
  const std::vector<double> up{2.0};
  EXPECT_EQ(evaluate_bindings(v, bs, actuators(), 1).size(), 1u);
  EXPECT_TRUE(evaluate_bindings(v, bs, actuators(), 1, up).empty());
}

TEST(Dispatch, RgbRegister) {
  ActuatorHub hub(actuators());
  EXPECT_TRUE(hub.dispatch(command("led", "R=1")).ok);
  EXPECT_EQ(hub.rgb("led"), (RgbState{true, false, false}));
  EXPECT_TRUE(hub.dispatch(command("led", "G=on, R=0")).ok);
  EXPECT_EQ(hub.rgb("led"), (RgbState{false, true, false}));
  EXPECT_FALSE(hub.dispatch(command("led", "X=1")).ok);
  EXPECT_EQ(hub.error_count("led"), 1u);
}

TEST(Dispatch, Relay) {
  ActuatorHub hub(actuators());
  hub.dispatch(command("relay", "on"));
  EXPECT_TRUE(hub.relay("relay"));
  hub.dispatch(command("relay", "toggle"));
  EXPECT_FALSE(hub.relay("relay"));
}

TEST(Dispatch, ElectricalStimulationLoopsBack) {
  sim::Simulator s(sim::TissueModel{}, sim::BiopotentialProfile{}, sim::EnvironmentModel{}, {}, kT0, 1);
  ActuatorHub hub({{"stim", ActuatorKind::electrical_stimulation, {{"intensity", "0.4"}}}},
                  [&s](const sim::StimulusEvent& e) { s.inject(e); });
  EXPECT_TRUE(hub.dispatch(command("stim", "", kT0 + 7000)).ok);
  ASSERT_EQ(s.events().size(), 1u);
  EXPECT_EQ(s.events()[0], (sim::StimulusEvent{sim::StimulusKind::electrical, kT0 + 7000, 0.4}));
}

TEST(Dispatch, MessageToFile) {
  phyto::testing::TempDir dir("file");
  const auto path = (dir / "msgs.txt").string();
  ActuatorHub hub({{"f", ActuatorKind::message_to_file, {{"path", path}}}});
  hub.dispatch(command("f", "first", kT0));
  hub.dispatch(command("f", "watered", kT0 + 1500));
  std::ifstream in(path);
  std::string line, last;
  while (std::getline(in, line)) last = line;
  EXPECT_EQ(last, "2026-01-01T00:00:01.500Z\twatered");
}

TEST(Dispatch, UnwritableFileDisablesOnlyThatActuator) {
  phyto::testing::TempDir dir("nofile");
  ActuatorHub hub({{"f", ActuatorKind::message_to_file, {{"path", (dir / "missing/dir/x.txt").string()}}},
                   {"sink", ActuatorKind::generic_sink, {}}});
  EXPECT_FALSE(hub.dispatch(command("f", "x")).ok);
  EXPECT_FALSE(hub.dispatch(command("f", "y")).ok);
  EXPECT_TRUE(hub.dispatch(command("sink", "z")).ok);
  EXPECT_EQ(hub.error_count("f"), 2u);
  EXPECT_EQ(hub.sink_log().size(), 1u);
}

TEST(Dispatch, ConfigValidation) {
  EXPECT_THROW(ActuatorHub({{"f", ActuatorKind::message_to_file, {}}}), ConfigError);
  EXPECT_THROW(ActuatorHub({{"ip", ActuatorKind::message_to_ip, {{"host", "127.0.0.1"}, {"port", "70000"}}}}), ConfigError);
  EXPECT_THROW(ActuatorHub({{"ip", ActuatorKind::message_to_ip, {{"host", "127.0.0.1"}, {"port", "9"}, {"transport", "sctp"}}}}),
               ConfigError);
}

namespace {

struct Listener {
  int fd = -1;
  int port = 0;

  explicit Listener(int type) {
    fd = ::socket(AF_INET, type, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
    if (type == SOCK_STREAM) ::listen(fd, 4);
  }
  ~Listener() { ::close(fd); }
};

std::string read_all(int fd) {
  std::string out;
  char buf[512];
  ssize_t n;
  while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) out.append(buf, std::size_t(n));
  return out;
}

}  // namespace

TEST(Dispatch, MessageToIpDatagram) {
  Listener l(SOCK_DGRAM);
  ActuatorHub hub({{"ip", ActuatorKind::message_to_ip, {{"host", "127.0.0.1"}, {"port", std::to_string(l.port)}}}});
  ASSERT_TRUE(hub.dispatch(command("ip", "hello", kT0)).ok);
  char buf[256];
  const auto n = ::recv(l.fd, buf, sizeof buf, 0);
  EXPECT_EQ(std::string(buf, std::size_t(n)), "2026-01-01T00:00:00.000Z\tb\thello\n");
}

TEST(Dispatch, MessageToIpStream) {
  Listener l(SOCK_STREAM);
  std::string got;
  std::thread server([&] {
    const int c = ::accept(l.fd, nullptr, nullptr);
    got = read_all(c);
    ::close(c);
  });
  ActuatorHub hub({{"ip", ActuatorKind::message_to_ip,
                    {{"host", "127.0.0.1"}, {"port", std::to_string(l.port)}, {"transport", "tcp"}}}});
  EXPECT_TRUE(hub.dispatch(command("ip", "over tcp", kT0)).ok);
  server.join();
  EXPECT_EQ(got, "2026-01-01T00:00:00.000Z\tb\tover tcp\n");
}

TEST(Dispatch, UnreachableStreamIsRetriedThenDropped) {
  int port;
  {
    Listener l(SOCK_STREAM);  // grab a free port, then close it
    port = l.port;
  }
  ActuatorHub hub({{"ip", ActuatorKind::message_to_ip,
                    {{"host", "127.0.0.1"}, {"port", std::to_string(port)}, {"transport", "tcp"}}}});
  const auto r = hub.dispatch(command("ip", "lost"));
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(hub.dropped_messages(), 1u);
  EXPECT_EQ(hub.error_count("ip"), 1u);
  EXPECT_TRUE(hub.dispatch(command("ip", "again")).ok == false);
  EXPECT_EQ(hub.dropped_messages(), 2u);
}
