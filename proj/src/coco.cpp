#include <initializer_list>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "groundguide/guidance.hpp"

namespace groundguide {

namespace {

struct Category {
  const char* label;
  std::initializer_list<const char*> synonyms;
};

// MSCOCO detection categories with surface forms commonly found in captions.
const Category kCocoCategories[] = {
    {"person",
     {"girl", "boy", "man", "woman", "kid", "child", "chef", "baker", "people",
      "adult", "rider", "children", "baby", "worker", "passenger", "sister",
      "biker", "policeman", "cop", "officer", "lady", "cowboy", "bride",
      "groom", "male", "female", "guy", "traveler", "mother", "father",
      "gentleman", "pitcher", "player", "skier", "snowboarder", "skater",
      "skateboarder", "surfer", "tourist", "doctor", "student", "driver",
      "teenager", "toddler", "men", "women", "persons", "batter", "catcher",
      "umpire", "pedestrian", "soldier", "shopper", "hunter", "camper"}},
    {"bicycle", {"bike", "unicycle", "minibike", "trike"}},
    {"car",
     {"automobile", "van", "minivan", "sedan", "suv", "hatchback", "cab",
      "jeep", "coupe", "taxicab", "limo", "taxi"}},
    {"motorcycle", {"motorbike", "motor bike", "motor cycle", "scooter"}},
    {"airplane",
     {"jetliner", "plane", "air plane", "monoplane", "aircraft", "jet",
      "airbus", "biplane", "seaplane", "airliner"}},
    {"bus", {"minibus", "trolley", "buses"}},
    {"train", {"locomotive", "tramway", "caboose"}},
    {"truck", {"pickup", "lorry", "hauler", "firetruck"}},
    {"boat",
     {"ship", "liner", "sailboat", "motorboat", "dinghy", "powerboat",
      "speedboat", "canoe", "skiff", "yacht", "kayak", "catamaran", "pontoon",
      "houseboat", "vessel", "rowboat", "trawler", "ferryboat", "watercraft",
      "tugboat", "schooner", "barge", "ferry", "sailboard", "paddleboat",
      "lifeboat", "freighter", "steamboat", "riverboat", "battleship",
      "steamship"}},
    {"traffic light",
     {"street light", "traffic signal", "stop light", "streetlight",
      "stoplight"}},
    {"fire hydrant", {"hydrant"}},
    {"stop sign", {}},
    {"parking meter", {"meter"}},
    {"bench", {"pew"}},
    {"bird",
     {"ostrich", "owl", "seagull", "goose", "duck", "parakeet", "falcon",
      "robin", "pelican", "waterfowl", "heron", "hummingbird", "mallard",
      "finch", "pigeon", "sparrow", "seabird", "osprey", "blackbird", "fowl",
      "shorebird", "woodpecker", "egret", "chickadee", "quail", "bluebird",
      "kingfisher", "buzzard", "willet", "gull", "swan", "bluejay", "flamingo",
      "cormorant", "parrot", "loon", "gosling", "waterbird", "pheasant",
      "rooster", "sandpiper", "crow", "raven", "turkey", "oriole", "cowbird",
      "warbler", "magpie", "peacock", "cockatiel", "lorikeet", "puffin",
      "vulture", "condor", "macaw", "peafowl", "cockatoo", "songbird",
      "geese"}},
    {"cat", {"kitten", "feline", "tabby", "kitty"}},
    {"dog",
     {"puppy", "beagle", "pup", "chihuahua", "schnauzer", "dachshund",
      "rottweiler", "canine", "pitbull", "collie", "pug", "terrier", "poodle",
      "labrador", "doggie", "doberman", "mutt", "doggy", "spaniel", "bulldog",
      "sheepdog", "weimaraner", "corgi", "cocker", "greyhound", "retriever",
      "brindle", "hound", "whippet", "husky", "puppies"}},
    {"horse",
     {"colt", "pony", "racehorse", "stallion", "equine", "mare", "foal",
      "palomino", "mustang", "clydesdale", "bronc", "bronco", "ponies"}},
    {"sheep", {"lamb", "ram", "goat", "ewe"}},
    {"cow",
     {"cattle", "oxen", "ox", "calf", "holstein", "heifer", "buffalo", "bull",
      "zebu", "bison", "calves"}},
    {"elephant", {}},
    {"bear", {"grizzly"}},
    {"zebra", {}},
    {"giraffe", {}},
    {"backpack", {"knapsack"}},
    {"umbrella", {"parasol"}},
    {"handbag", {"wallet", "purse", "briefcase"}},
    {"tie", {"necktie", "bow tie"}},
    {"suitcase", {"suit case", "luggage"}},
    {"frisbee", {}},
    {"skis", {"ski"}},
    {"snowboard", {}},
    {"sports ball", {"ball", "soccer ball", "football", "baseball",
                     "basketball", "tennis ball", "volleyball"}},
    {"kite", {}},
    {"baseball bat", {"bat"}},
    {"baseball glove", {"glove", "mitt"}},
    {"skateboard", {}},
    {"surfboard", {"longboard", "skimboard", "shortboard", "wakeboard"}},
    {"tennis racket", {"racket", "racquet", "tennis racquet"}},
    {"bottle", {}},
    {"wine glass", {"wineglass"}},
    {"cup", {"mug"}},
    {"fork", {}},
    {"knife", {"pocketknife", "knives"}},
    {"spoon", {}},
    {"bowl", {}},
    {"banana", {}},
    {"apple", {}},
    {"sandwich",
     {"burger", "sub", "cheeseburger", "hamburger", "sandwiches"}},
    {"orange", {}},
    {"broccoli", {}},
    {"carrot", {}},
    {"hot dog", {"hotdog", "hot dogs"}},
    {"pizza", {}},
    {"donut", {"doughnut", "bagel"}},
    {"cake", {"cheesecake", "cupcake", "shortcake", "coffeecake"}},
    {"chair", {"seat", "stool"}},
    {"couch",
     {"sofa", "recliner", "futon", "loveseat", "settee", "chesterfield"}},
    {"potted plant", {"houseplant", "plant"}},
    {"bed", {}},
    {"dining table", {"table", "desk"}},
    {"toilet", {"urinal", "commode", "lavatory", "potty"}},
    {"tv", {"monitor", "televison", "television"}},
    {"laptop",
     {"computer", "notebook", "netbook", "macbook", "laptop computer"}},
    {"mouse", {}},
    {"remote", {"remote control", "controller"}},
    {"keyboard", {}},
    {"cell phone",
     {"mobile phone", "phone", "cellphone", "telephone", "smartphone",
      "iphone"}},
    {"microwave", {}},
    {"oven", {"stovetop", "stove", "stove top oven"}},
    {"toaster", {}},
    {"sink", {}},
    {"refrigerator", {"fridge", "freezer"}},
    {"book", {"novel", "paperback"}},
    {"clock", {}},
    {"vase", {}},
    {"scissors", {}},
    {"teddy bear", {"teddybear", "teddy"}},
    {"hair drier",
     {"hairdryer", "hair dryer", "blow dryer", "blowdryer", "blow drier",
      "dryer"}},
    {"toothbrush", {}},
};

SynonymMap make_coco() {
  std::map<std::string, std::string> entries;
  std::set<std::string> vocabulary;
  for (const auto& cat : kCocoCategories) {
    vocabulary.insert(cat.label);
    for (const char* s : cat.synonyms) entries[s] = cat.label;
  }
  return SynonymMap(entries, vocabulary);
}

}  // namespace

const SynonymMap& SynonymMap::coco_default() {
  static const SynonymMap map = make_coco();
  return map;
}

}  // namespace groundguide
