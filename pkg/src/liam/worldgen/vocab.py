"""Fixed label spaces: actions, object classes and instruction tokens."""
from __future__ import annotations

ACTIONS = (
    "MoveAhead",
    "RotateLeft",
    "RotateRight",
    "LookUp",
    "LookDown",
    "PickupObject",
    "PutObject",
    "OpenObject",
    "CloseObject",
    "ToggleObjectOn",
    "ToggleObjectOff",
    "SliceObject",
    "<<stop>>",
    "<<pad>>",
)
ACTION_ID = {name: i for i, name in enumerate(ACTIONS)}
NUM_ACTIONS = len(ACTIONS)
NUM_MOTOR_ACTIONS = 12
STOP = ACTION_ID["<<stop>>"]
PAD = ACTION_ID["<<pad>>"]

MOVE_AHEAD, ROTATE_LEFT, ROTATE_RIGHT, LOOK_UP, LOOK_DOWN = range(5)
PICKUP, PUT, OPEN, CLOSE, TOGGLE_ON, TOGGLE_OFF, SLICE = range(5, 12)
INTERACTIONS = frozenset(range(PICKUP, SLICE + 1))

# (name, pickupable, receptacle, openable, toggleable, sliceable)
_OBJECT_TABLE = [
    ("AlarmClock", 1, 0, 0, 0, 0), ("Apple", 1, 0, 0, 0, 1), ("BaseballBat", 1, 0, 0, 0, 0),
    ("BasketBall", 1, 0, 0, 0, 0), ("Book", 1, 0, 0, 0, 0), ("Bowl", 1, 0, 0, 0, 0),
    ("Box", 1, 0, 0, 0, 0), ("Bread", 1, 0, 0, 0, 1), ("ButterKnife", 1, 0, 0, 0, 0),
    ("CD", 1, 0, 0, 0, 0), ("Candle", 1, 0, 0, 0, 0), ("CellPhone", 1, 0, 0, 0, 0),
    ("Cloth", 1, 0, 0, 0, 0), ("CreditCard", 1, 0, 0, 0, 0), ("Cup", 1, 0, 0, 0, 0),
    ("DishSponge", 1, 0, 0, 0, 0), ("Egg", 1, 0, 0, 0, 1), ("Fork", 1, 0, 0, 0, 0),
    ("GlassBottle", 1, 0, 0, 0, 0), ("HandTowel", 1, 0, 0, 0, 0), ("Kettle", 1, 0, 0, 0, 0),
    ("KeyChain", 1, 0, 0, 0, 0), ("Knife", 1, 0, 0, 0, 0), ("Ladle", 1, 0, 0, 0, 0),
    ("Laptop", 1, 0, 0, 0, 0), ("Lettuce", 1, 0, 0, 0, 1), ("Mug", 1, 0, 0, 0, 0),
    ("Newspaper", 1, 0, 0, 0, 0), ("Pan", 1, 0, 0, 0, 0), ("Pen", 1, 0, 0, 0, 0),
    ("Pencil", 1, 0, 0, 0, 0), ("PepperShaker", 1, 0, 0, 0, 0), ("Pillow", 1, 0, 0, 0, 0),
    ("Plate", 1, 0, 0, 0, 0), ("Plunger", 1, 0, 0, 0, 0), ("Pot", 1, 0, 0, 0, 0),
    ("Potato", 1, 0, 0, 0, 1), ("RemoteControl", 1, 0, 0, 0, 0), ("SaltShaker", 1, 0, 0, 0, 0),
    ("SoapBar", 1, 0, 0, 0, 0), ("SoapBottle", 1, 0, 0, 0, 0), ("Spatula", 1, 0, 0, 0, 0),
    ("Spoon", 1, 0, 0, 0, 0), ("SprayBottle", 1, 0, 0, 0, 0), ("Statue", 1, 0, 0, 0, 0),
    ("TennisRacket", 1, 0, 0, 0, 0), ("TissueBox", 1, 0, 0, 0, 0), ("ToiletPaper", 1, 0, 0, 0, 0),
    ("Tomato", 1, 0, 0, 0, 1), ("Vase", 1, 0, 0, 0, 0), ("Watch", 1, 0, 0, 0, 0),
    ("WateringCan", 1, 0, 0, 0, 0), ("WineBottle", 1, 0, 0, 0, 0),
    ("ArmChair", 0, 1, 0, 0, 0), ("Bathtub", 0, 1, 0, 0, 0), ("Bed", 0, 1, 0, 0, 0),
    ("Cabinet", 0, 1, 1, 0, 0), ("CoffeeMachine", 0, 1, 0, 1, 0), ("CoffeeTable", 0, 1, 0, 0, 0),
    ("CounterTop", 0, 1, 0, 0, 0), ("Desk", 0, 1, 0, 0, 0), ("DiningTable", 0, 1, 0, 0, 0),
    ("Drawer", 0, 1, 1, 0, 0), ("Dresser", 0, 1, 0, 0, 0), ("Fridge", 0, 1, 1, 0, 0),
    ("GarbageCan", 0, 1, 0, 0, 0), ("Microwave", 0, 1, 1, 1, 0), ("Ottoman", 0, 1, 0, 0, 0),
    ("Safe", 0, 1, 1, 0, 0), ("Shelf", 0, 1, 0, 0, 0), ("SideTable", 0, 1, 0, 0, 0),
    ("Sink", 0, 1, 0, 0, 0), ("Sofa", 0, 1, 0, 0, 0), ("StoveBurner", 0, 1, 0, 1, 0),
    ("Toilet", 0, 1, 1, 0, 0), ("Cart", 0, 1, 0, 0, 0),
    ("DeskLamp", 0, 0, 0, 1, 0), ("FloorLamp", 0, 0, 0, 1, 0), ("LightSwitch", 0, 0, 0, 1, 0),
    ("Television", 0, 0, 0, 1, 0), ("Faucet", 0, 0, 0, 1, 0),
    ("HousePlant", 0, 0, 0, 0, 0), ("Painting", 0, 0, 0, 0, 0), ("Blinds", 0, 0, 1, 0, 0),
]

NO_OBJECT = 0
OBJECT_NAMES = ("NoObject",) + tuple(row[0] for row in _OBJECT_TABLE)
NUM_OBJECTS = len(OBJECT_NAMES)
PICKUPABLE = frozenset(i + 1 for i, row in enumerate(_OBJECT_TABLE) if row[1])
RECEPTACLE = frozenset(i + 1 for i, row in enumerate(_OBJECT_TABLE) if row[2])
OPENABLE = frozenset(i + 1 for i, row in enumerate(_OBJECT_TABLE) if row[3])
TOGGLEABLE = frozenset(i + 1 for i, row in enumerate(_OBJECT_TABLE) if row[4])
SLICEABLE = frozenset(i + 1 for i, row in enumerate(_OBJECT_TABLE) if row[5])

assert NUM_ACTIONS == 14 and NUM_OBJECTS == 85


def object_token(cls: int) -> str:
    return OBJECT_NAMES[cls].lower()


GOAL_TEMPLATES = {
    "pickup": ("pick up the {a}", "find and grab the {a}"),
    "pick_and_place": ("put a {a} in the {b}", "place the {a} in the {b}", "move the {a} to the {b}"),
    "look_in_light": ("examine the {a} under the {b}", "look at the {a} in the light of the {b}",
                      "pick up the {a} and turn on the {b}"),
    "slice_and_place": ("put a slice of {a} in the {b}", "cut the {a} and place it in the {b}"),
    "toggle_on": ("turn on the {a}", "switch the {a} on"),
    "toggle_off": ("turn off the {a}", "switch the {a} off"),
    "open_inspect": ("check inside the {a}", "look inside the {a}"),
}

SUBGOAL_TEMPLATES = {
    "pickup": ("pick up the {a}", "find and grab the {a}"),
    "goto": ("go to the {a}", "walk to the {a}", "head over to the {a}", "turn and go to the {a}"),
    "pickup": ("pick up the {a}", "take the {a}", "grab the {a}"),
    "put": ("put the {a} in the {b}", "place the {a} on the {b}"),
    "open": ("open the {a}",),
    "close": ("close the {a}",),
    "toggle_on": ("turn on the {a}", "switch on the {a}"),
    "toggle_off": ("turn off the {a}", "switch off the {a}"),
    "slice": ("slice the {a}", "cut the {a}"),
}

PAD_TOKEN = "<pad>"
GOAL_TOKEN = "<<goal>>"
SEP_TOKEN = "."


def _build_vocab() -> tuple[str, ...]:
    words: set[str] = set()
    for table in (GOAL_TEMPLATES, SUBGOAL_TEMPLATES):
        for templates in table.values():
            for t in templates:
                words.update(w for w in t.split() if not w.startswith("{"))
    words.update(object_token(c) for c in range(1, NUM_OBJECTS))
    return (PAD_TOKEN, GOAL_TOKEN, SEP_TOKEN) + tuple(sorted(words))


VOCAB = _build_vocab()
TOKEN_ID = {w: i for i, w in enumerate(VOCAB)}
VOCAB_SIZE = len(VOCAB)


def tokenize(text: str) -> list[int]:
    return [TOKEN_ID[w] for w in text.split()]


def detokenize(ids) -> str:
    return " ".join(VOCAB[int(i)] for i in ids)
