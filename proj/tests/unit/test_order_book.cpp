#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "mktsim/error.hpp"
#include "mktsim/order_book.hpp"
#include "support.hpp"

using namespace mktsim;
using mktsim::test::Gen;

namespace {

// Reference matcher: a flat list scanned linearly for the best price, then
// the lowest arrival sequence.
struct NaiveBook {
  struct Order {
    OrderId id;
    AgentId owner;
    Side side;  // buy = bid
    Ticks price;
    double qty;
    long seq;
  };
  std::vector<Order> orders;
  long seq = 0;

  std::vector<Fill> match(Side aggressor, std::optional<Ticks> limit, double& qty, AgentId taker, double tick) {
    std::vector<Fill> fills;
    while (qty > 0.0) {
      int best = -1;
      for (int i = 0; i < static_cast<int>(orders.size()); ++i) {
        const Order& o = orders[static_cast<std::size_t>(i)];
        if (o.side == aggressor) continue;
        if (limit && (aggressor == Side::buy ? o.price > *limit : o.price < *limit)) continue;
        if (best < 0) {
          best = i;
          continue;
        }
        const Order& b = orders[static_cast<std::size_t>(best)];
        const bool better = aggressor == Side::buy ? o.price < b.price : o.price > b.price;
        if (better || (o.price == b.price && o.seq < b.seq)) best = i;
      }
      if (best < 0) break;
      Order& o = orders[static_cast<std::size_t>(best)];
      const double q = std::min(qty, o.qty);
      fills.push_back(Fill{o.id, o.owner, taker, aggressor, static_cast<double>(o.price) * tick, q});
      qty -= q;
      o.qty -= q;
      if (o.qty <= 0.0) orders.erase(orders.begin() + best);
    }
    return fills;
  }

  std::optional<Ticks> best(Side book_side) const {
    std::optional<Ticks> b;
    for (const auto& o : orders)
      if (o.side == book_side && (!b || (book_side == Side::buy ? o.price > *b : o.price < *b))) b = o.price;
    return b;
  }
};

void check_fills(const std::vector<Fill>& a, const std::vector<Fill>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].maker_order == b[i].maker_order);
    CHECK(a[i].maker == b[i].maker);
    CHECK(a[i].taker == b[i].taker);
    CHECK(a[i].aggressor_side == b[i].aggressor_side);
    CHECK(a[i].price == doctest::Approx(b[i].price));
    CHECK(a[i].qty == b[i].qty);
  }
}

void check_same_book(const OrderBook& book, const NaiveBook& ref) {
  std::vector<NaiveBook::Order> expect = ref.orders;
  std::sort(expect.begin(), expect.end(), [](const auto& x, const auto& y) {
    if (x.side != y.side) return x.side == Side::buy;
    if (x.price != y.price) return x.side == Side::buy ? x.price > y.price : x.price < y.price;
    return x.seq < y.seq;
  });
  std::vector<NaiveBook::Order> got;
  book.for_each_order([&](Side s, Ticks p, const RestingOrder& o) {
    got.push_back({o.id, o.owner, s, p, o.qty, 0});
  });
  REQUIRE(got.size() == expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].id == expect[i].id);
    CHECK(got[i].side == expect[i].side);
    CHECK(got[i].price == expect[i].price);
    CHECK(got[i].qty == expect[i].qty);
  }
  CHECK(book.order_count() == ref.orders.size());
  const auto bb = ref.best(Side::buy), ba = ref.best(Side::sell);
  CHECK(book.has_bids() == bb.has_value());
  CHECK(book.has_asks() == ba.has_value());
  if (bb) CHECK(book.best_bid_ticks() == *bb);
  if (ba) CHECK(book.best_ask_ticks() == *ba);
}

} // namespace

TEST_CASE("basic price-time priority") {
  OrderBook b(0.01);
  const auto a1 = b.submit_limit(Side::sell, 100.02, 5, 1).order_id;
  const auto a2 = b.submit_limit(Side::sell, 100.01, 3, 2).order_id;
  const auto a3 = b.submit_limit(Side::sell, 100.01, 4, 3).order_id;
  b.submit_limit(Side::buy, 99.99, 2, 4);
  CHECK(b.best_ask() == doctest::Approx(100.01));
  CHECK(b.best_bid() == doctest::Approx(99.99));
  const auto r = b.submit_market(Side::buy, 9, 9);
  REQUIRE(r.fills.size() == 3);
  CHECK(r.fills[0].maker_order == a2);
  CHECK(r.fills[1].maker_order == a3);
  CHECK(r.fills[2].maker_order == a1);
  CHECK(r.fills[2].qty == 2.0);
  CHECK(r.executed == 9.0);
  CHECK(*r.vwap == doctest::Approx((7 * 100.01 + 2 * 100.02) / 9));
  const auto m = b.mid_and_spreads();
  CHECK(m.p_mid == doctest::Approx(100.005));
  CHECK(m.s_ref_bid == doctest::Approx(0.015));
  CHECK(m.s_ref_ask == doctest::Approx(0.015));
}

TEST_CASE("market order partial fill and empty side") {
  OrderBook b(0.01);
  b.submit_limit(Side::buy, 99.0, 2, 1);
  const auto r = b.submit_market(Side::sell, 5, 2);
  CHECK(r.executed == 2.0);
  CHECK(r.unfilled() == 3.0);
  CHECK_FALSE(b.has_bids());
  const auto none = b.submit_market(Side::sell, 1, 2);
  CHECK(none.executed == 0.0);
  CHECK_FALSE(none.vwap.has_value());
  CHECK_THROWS_AS(b.mid_and_spreads(), EmptySide);
  CHECK_THROWS_AS(b.best_bid(), EmptySide);
}

TEST_CASE("invalid input") {
  OrderBook b(0.01);
  CHECK_THROWS_AS(b.submit_limit(Side::buy, 100.005, 1, 1), InvalidPrice);
  CHECK_THROWS_AS(b.submit_limit(Side::buy, 100.0, 0, 1), InvalidArgument);
  CHECK_THROWS_AS(b.submit_market(Side::buy, -1, 1), InvalidArgument);
  CHECK_THROWS_AS(b.cancel(12345), UnknownOrder);
}

TEST_CASE("snapshot levels are tick slots around the mid") {
  OrderBook b(0.01);
  b.submit_limit(Side::buy, 99.98, 4, 1);
  b.submit_limit(Side::buy, 99.95, 7, 1);
  b.submit_limit(Side::sell, 100.01, 3, 1);
  b.submit_limit(Side::sell, 100.03, 6, 1);
  const auto s = b.snapshot(3);
  // mid 99.995: bid slots 99.99, 99.98, 99.97; ask slots 100.00, 100.01, 100.02
  CHECK(s.mid == doctest::Approx(99.995));
  CHECK(s.bid_volumes == std::vector<double>{0, 4, 0});
  CHECK(s.ask_volumes == std::vector<double>{0, 3, 0});
  CHECK(s.as_vector() == std::vector<double>{0, 4, 0, 0, 3, 0});
}

TEST_CASE("property: matches the naive reference matcher on random operation sequences") {
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    Gen g(seed);
    const double tick = 0.01;
    OrderBook book(tick);
    NaiveBook ref;
    std::vector<OrderId> live;
    const int ops = g.integer(1, 80);
    for (int k = 0; k < ops; ++k) {
      const int kind = g.integer(0, 9);
      const AgentId owner = g.integer(-1, 5);
      const Side side = g.coin() ? Side::buy : Side::sell;
      if (kind <= 5) {
        const Ticks price = 10000 + g.integer(-8, 8);
        const double qty = g.integer(1, 10);
        const auto res = book.submit_limit_ticks(side, price, qty, owner);
        double rem = qty;
        const auto fills = ref.match(side, price, rem, owner, tick);
        check_fills(res.fills, fills);
        CHECK(res.rested_qty == rem);
        if (rem > 0.0) {
          ref.orders.push_back({res.order_id, owner, side, price, rem, ref.seq++});
          live.push_back(res.order_id);
        }
      } else if (kind <= 7) {
        const double qty = g.integer(1, 25);
        const auto probe = book.probe_market(side, qty);
        const auto res = book.submit_market(side, qty, owner);
        double rem = qty;
        const auto fills = ref.match(side, std::nullopt, rem, owner, tick);
        check_fills(res.fills, fills);
        CHECK(res.executed == qty - rem);
        CHECK(probe.first == res.executed);
        CHECK(probe.second.has_value() == res.vwap.has_value());
        if (res.vwap) CHECK(*probe.second == doctest::Approx(*res.vwap));
      } else if (!live.empty()) {
        const std::size_t pick = g.rng.below(live.size());
        const OrderId id = live[pick];
        auto it = std::find_if(ref.orders.begin(), ref.orders.end(), [&](const auto& o) { return o.id == id; });
        if (it == ref.orders.end()) {
          CHECK_THROWS_AS(book.cancel(id), UnknownOrder);
          live.erase(live.begin() + static_cast<long>(pick));
        } else if (kind == 8) {
          CHECK(book.cancel(id) == it->qty);
          ref.orders.erase(it);
          live.erase(live.begin() + static_cast<long>(pick));
        } else {
          const double q = g.integer(1, 6);
          const double removed = book.reduce(id, q);
          CHECK(removed == std::min(q, it->qty));
          it->qty -= removed;
          if (it->qty <= 0.0) ref.orders.erase(it);
        }
      }
      check_same_book(book, ref);
    }
  }
}

TEST_CASE("property: conservation of quantity and no crossed book") {
  Gen g(99);
  OrderBook book(0.01);
  double submitted = 0.0, filled = 0.0, cancelled = 0.0;
  std::vector<OrderId> ids;
  for (int k = 0; k < 3000; ++k) {
    const Side side = g.coin() ? Side::buy : Side::sell;
    if (g.coin(0.8)) {
      const double q = g.integer(1, 9);
      submitted += q;
      const auto r = book.submit_limit_ticks(side, 5000 + g.integer(-10, 10), q, 1);
      for (const auto& f : r.fills) filled += 2.0 * f.qty;
      if (r.rested_qty > 0.0) ids.push_back(r.order_id);
    } else if (!ids.empty()) {
      const std::size_t pick = g.rng.below(ids.size());
      try {
        cancelled += book.cancel(ids[pick]);
      } catch (const UnknownOrder&) {
      }
      ids.erase(ids.begin() + static_cast<long>(pick));
    }
    if (book.has_bids() && book.has_asks()) CHECK(book.best_bid_ticks() < book.best_ask_ticks());
  }
  const double resting = book.total_volume(Side::buy) + book.total_volume(Side::sell);
  CHECK(submitted == doctest::Approx(resting + filled + cancelled));
}
