#pragma once

#include "advnlg/corpus.hpp"
#include "advnlg/rng.hpp"

#include <string>
#include <vector>

namespace advnlg::testing {

// Deterministic E2E-style corpus: restaurant MRs over the usual slot set
// with template references. Rich enough that cross entropy has something to
// learn, small enough for desk-scale training runs.
inline std::vector<CorpusEntry> synthetic_e2e_corpus(std::size_t samples,
                                                     std::uint64_t seed) {
  const std::vector<std::string> names{
      "Wildwood",   "The Plough",  "Blue Spice", "The Mill",   "Giraffe",
      "The Vaults", "Zizzi",       "Cocum",      "The Punter", "Aromi",
      "Fitzbillies", "Midsummer House", "The Twenty Two", "Loch Fyne"};
  const std::vector<std::string> eat_types{"restaurant", "pub", "coffee shop"};
  const std::vector<std::string> foods{"indian",   "chinese", "french", "english",
                                       "italian",  "japanese", "fast food"};
  const std::vector<std::string> prices{"cheap",     "moderate", "high"};
  const std::vector<std::string> areas{"riverside", "city centre"};
  const std::vector<std::string> nears{"Raja Indian Cuisine", "Cafe Rouge",
                                       "The Bakers", "Express by Holiday Inn",
                                       "The Sorrento", "Crowne Plaza Hotel",
                                       "Burger King", "Rainbow Vegetarian Cafe"};
  const std::vector<std::string> ratings{"1 out of 5", "3 out of 5", "5 out of 5",
                                         "low", "average", "high"};

  RngStream rng(seed);
  std::vector<CorpusEntry> out;
  out.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    RngStream draw = rng.split(k);
    const std::string& name = names[draw.index(names.size())];
    const std::string& eat = eat_types[draw.index(eat_types.size())];
    const std::string& food = foods[draw.index(foods.size())];
    const std::string& price = prices[draw.index(prices.size())];
    const std::string& area = areas[draw.index(areas.size())];
    const std::string& near = nears[draw.index(nears.size())];
    const std::string& rating = ratings[draw.index(ratings.size())];
    const bool family = draw.index(2) == 0;
    const bool with_near = draw.index(3) != 0;
    const bool with_rating = draw.index(3) != 0;
    const bool with_price = draw.index(2) == 0;

    CorpusEntry e;
    e.mr_text = "name[" + name + "], eatType[" + eat + "], food[" + food + "]";
    if (with_price) e.mr_text += ", priceRange[" + price + "]";
    if (with_rating) e.mr_text += ", customer rating[" + rating + "]";
    e.mr_text += ", area[" + area + "]";
    e.mr_text += ", familyFriendly[" + std::string(family ? "yes" : "no") + "]";
    if (with_near) e.mr_text += ", near[" + near + "]";
    e.mr = parse_mr(e.mr_text);

    const std::string family_phrase =
        family ? "it is family friendly." : "it is not family friendly.";
    std::string ref;
    switch (draw.index(3)) {
      case 0:
        ref = name + " is a " + food + " " + eat + " in the " + area + ".";
        if (with_near) ref += " it is near " + near + ".";
        if (with_price) ref += " prices are " + price + ".";
        if (with_rating) ref += " it has a " + rating + " customer rating.";
        ref += " " + family_phrase;
        break;
      case 1:
        ref = "located in the " + area +
              (with_near ? " near " + near : std::string()) + ", " + name +
              " is a " + food + " " + eat + ".";
        if (with_rating) ref += " customers rate it " + rating + ".";
        if (with_price) ref += " it is " + price + ".";
        ref += " " + family_phrase;
        break;
      default:
        ref = name + " serves " + food + " food in the " + area + ".";
        if (with_price) ref += " it has " + price + " prices.";
        if (with_near) ref += " you can find it near " + near + ".";
        if (with_rating) ref += " its customer rating is " + rating + ".";
        ref += " " + family_phrase;
    }
    e.refs.push_back(ref);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace advnlg::testing
